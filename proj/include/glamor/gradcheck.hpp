#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "glamor/layers.hpp"

namespace glamor {

// Central finite differences against analytic gradients. The loss closure
// must be a pure function of the parameter values; the checker perturbs one
// entry at a time and restores it.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    int64_t checked = 0;

    bool ok(double tol) const { return max_rel_err < tol; }
};

// Relative error scaled so near-zero gradient pairs do not blow it up:
// |a - n| / max(1, |a|, |n|).
inline double scaled_rel_err(double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

namespace detail {

// Central difference of the loss along one coordinate. When the error at the
// base step exceeds retry_tol the entry is re-measured at smaller steps and
// the best agreement wins: a genuine gradient bug stays wrong as h shrinks,
// while an error from crossing a ReLU kink or pooling tie vanishes.
template <class T>
double fd_entry_err(T* slot, double analytic, const std::function<double()>& loss_fn, double h,
                    double retry_tol) {
    const T saved = *slot;
    double best = 1e300;
    for (double step : {h, h * 0.1, h * 0.01}) {
        *slot = saved + static_cast<T>(step);
        const double f_plus = loss_fn();
        *slot = saved - static_cast<T>(step);
        const double f_minus = loss_fn();
        *slot = saved;
        const double numeric = (f_plus - f_minus) / (2.0 * step);
        best = std::min(best, scaled_rel_err(analytic, numeric));
        if (retry_tol <= 0.0 || best < retry_tol)
            break;
    }
    return best;
}

} // namespace detail

template <class T>
GradCheckReport check_gradients(const ParamRefs<T>& params,
                                const std::function<double()>& loss_fn,
                                double h = 1e-5, int64_t max_entries_per_param = 0,
                                double retry_tol = 0.0) {
    GradCheckReport report;
    for (const auto& p : params) {
        if (!p.trainable)
            continue;
        const int64_t n = p.value->size();
        const int64_t step =
            (max_entries_per_param > 0 && n > max_entries_per_param) ? n / max_entries_per_param : 1;
        for (int64_t i = 0; i < n; i += step) {
            const double analytic = static_cast<double>((*p.grad)[i]);
            const double err =
                detail::fd_entry_err(p.value->data() + i, analytic, loss_fn, h, retry_tol);
            ++report.checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = p.name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

// Same scheme for gradients with respect to an input tensor.
template <class T>
GradCheckReport check_input_gradient(Tensor<T>& input, const Tensor<T>& analytic_grad,
                                     const std::function<double()>& loss_fn, double h = 1e-5,
                                     int64_t max_entries = 0, double retry_tol = 0.0) {
    GradCheckReport report;
    const int64_t n = input.size();
    const int64_t step = (max_entries > 0 && n > max_entries) ? n / max_entries : 1;
    for (int64_t i = 0; i < n; i += step) {
        const double err = detail::fd_entry_err(input.data() + i,
                                                static_cast<double>(analytic_grad[i]), loss_fn, h,
                                                retry_tol);
        ++report.checked;
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_param = "<input>";
            report.worst_index = i;
        }
    }
    return report;
}

} // namespace glamor
