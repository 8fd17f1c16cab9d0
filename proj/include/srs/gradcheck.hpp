#pragma once

#include <functional>
#include <vector>

#include "srs/autodiff.hpp"

namespace srs {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int worst_input = -1;   // which input tensor held the worst element
    int worst_index = -1;   // flat index within that tensor
    double analytic = 0.0;
    double numeric = 0.0;
};

/// rel = |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of d(loss)/d(inputs). `build` must evaluate the
/// same deterministic scalar for given input values (no fresh randomness, no
/// live dropout). Every element of every input is perturbed by +/- eps.
GradCheckReport check_gradients(std::vector<Tensor> inputs,
                                const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                                double eps = 1e-5);

class ParamStore;
class ParamBinding;

struct ParamGradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Central-difference check of d(loss)/d(theta) over every parameter in the
/// store. `loss_fn` must be deterministic (dropout disabled) and is invoked
/// with a fresh tape and binding per evaluation.
ParamGradCheckReport check_param_gradients(
    ParamStore& store, const std::function<Var(Tape&, ParamBinding&)>& loss_fn,
    double eps = 1e-5);

}  // namespace srs
