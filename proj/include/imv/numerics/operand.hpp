#pragma once

#include <concepts>

#include "imv/numerics/matrix.hpp"
#include "imv/numerics/ops.hpp"
#include "imv/numerics/tape.hpp"

namespace imv {

/// Kernels are written once against this concept and run either on plain
/// matrices or on tape variables (for gradients).
template <class M>
concept Operand = std::same_as<M, Matrix> || std::same_as<M, ad::Var>;

}  // namespace imv
