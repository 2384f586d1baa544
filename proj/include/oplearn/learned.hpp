#pragma once

#include "oplearn/linop.hpp"
#include "oplearn/ortho.hpp"

namespace oplearn {

// Learned restricted forward A P_Xn x = sum_i <x, x-hat_i>_X y-hat_i and its
// exact-by-construction adjoint (A P_Xn)* y = sum_i <y, y-hat_i>_Y x-hat_i.
// Requires an image-primary system.
Vec apply_learned_forward(const OrthoSystem& sys, const Vec& x);
Vec apply_learned_forward_adjoint(const OrthoSystem& sys, const Vec& y);
// A* A P_Xn x = sum_i <x, x-hat_i>_X z-hat_i (image-primary).
Vec apply_learned_normal(const OrthoSystem& sys, const Vec& x);
// A* P_Yn y = sum_i <y, y-bar_i>_Y z-bar_i (measurement-primary).
Vec apply_learned_normal_data(const OrthoSystem& sys, const Vec& y);

// Orthogonal projection onto the span of the system's primary family.
Vec project_primary(const OrthoSystem& sys, const Vec& v);

// Packaged handle for the restricted forward (image-primary system).
LinOp learned_forward_op(const OrthoSystem& sys);

// Training-free inverse of the restricted forward: x = sum_i <y, y-bar_i>_Y
// x-bar_i, i.e. A^-1 P_Yn y (measurement-primary system).
Vec reconstruct_projection(const OrthoSystem& sys, const Vec& y);

// Dual least squares: the minimum-norm solution of P_Yn A x = P_Yn y equals
// the projection of reconstruct_projection onto span{z-check}; takes the
// measurement-primary and backprojection-primary systems.
Vec reconstruct_dls(const OrthoSystem& meas, const OrthoSystem& back,
                    const Vec& y);

// Partial sums of |<x, x-hat_i>_X|: how much of x the first k basis members
// explain in l1 terms (image-primary system).
std::vector<double> l1_partial_sums(const OrthoSystem& sys, const Vec& x);

}  // namespace oplearn
