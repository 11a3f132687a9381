#include "transavs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace transavs {

GradcheckReport gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, const GradcheckOptions& options) {
    for (auto& t : inputs) t.zero_grad();
    Tensor out = f(inputs);
    if (out.numel() != 1)
        throw std::invalid_argument("gradcheck: function must return a scalar, got " + shape_str(out.shape()));
    out.backward();

    GradcheckReport report;
    const double h = options.step;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& x = inputs[k];
        if (!x.requires_grad()) continue;
        std::vector<double> analytic = x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                                    : std::vector<double>(x.numel(), 0.0);
        auto buf = x.mutable_data();
        for (std::size_t i = 0; i < buf.size(); ++i) {
            const double orig = buf[i];
            buf[i] = orig + h;
            const double fp = f(inputs).item();
            buf[i] = orig - h;
            const double fm = f(inputs).item();
            buf[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double abs_err = std::abs(numeric - analytic[i]);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
            const double rel = abs_err / denom;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_rel_error || report.checked == 0) {
                report.max_rel_error = std::max(report.max_rel_error, rel);
                report.worst_input = k;
                report.worst_index = i;
            }
            ++report.checked;
        }
    }
    for (auto& t : inputs) t.zero_grad();
    return report;
}

}  // namespace transavs
