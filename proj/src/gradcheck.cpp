#include "srs/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "srs/params.hpp"

namespace srs {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(std::vector<Tensor> inputs,
                                const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                                double eps) {
    std::vector<Tensor> grads;
    {
        Tape t;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const Tensor& x : inputs) vars.push_back(t.leaf(x, true));
        Var loss = build(t, vars);
        if (loss.size() != 1) throw DimensionError("gradient check loss must be scalar");
        t.backward(loss);
        for (const Var& v : vars) grads.push_back(t.grad_or_zeros(v));
    }

    const auto eval = [&]() {
        Tape t;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const Tensor& x : inputs) vars.push_back(t.leaf(x, false));
        return build(t, vars).value().item();
    };

    GradCheckReport rep;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& x = inputs[k];
        for (int i = 0; i < x.size(); ++i) {
            const double x0 = x[i];
            x[i] = x0 + eps;
            const double fp = eval();
            x[i] = x0 - eps;
            const double fm = eval();
            x[i] = x0;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = grads[k][i];
            const double rel = relative_error(analytic, numeric);
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = static_cast<int>(k);
                rep.worst_index = i;
                rep.analytic = analytic;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

ParamGradCheckReport check_param_gradients(
    ParamStore& store, const std::function<Var(Tape&, ParamBinding&)>& loss_fn, double eps) {
    GradMap grads;
    {
        Tape t;
        ParamBinding pb(t, store);
        Var loss = loss_fn(t, pb);
        if (loss.size() != 1) throw DimensionError("gradient check loss must be scalar");
        if (!loss.value().all_finite()) throw TrainingFault("non-finite loss in gradient check");
        t.backward(loss);
        pb.add_grads_to(grads);
    }

    const auto eval = [&]() {
        Tape t;
        ParamBinding pb(t, store);
        const double f = loss_fn(t, pb).value().item();
        if (!std::isfinite(f)) throw TrainingFault("non-finite loss in gradient check");
        return f;
    };

    ParamGradCheckReport rep;
    for (Param& p : store.params()) {
        const auto git = grads.find(p.name);
        for (int i = 0; i < p.value.size(); ++i) {
            const double x0 = p.value[i];
            p.value[i] = x0 + eps;
            const double fp = eval();
            p.value[i] = x0 - eps;
            const double fm = eval();
            p.value[i] = x0;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = git == grads.end() ? 0.0 : git->second[i];
            const double rel = relative_error(analytic, numeric);
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p.name;
                rep.worst_index = i;
                rep.analytic = analytic;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace srs
