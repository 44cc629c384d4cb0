#pragma once

#include "causalgap/kernels.hpp"

namespace causalgap::kernels {

// Raw variant tables; the caller is responsible for the CPU feature check.
const KernelTable* avx2_table_unchecked();
const KernelTable* neon_table_unchecked();

}  // namespace causalgap::kernels
