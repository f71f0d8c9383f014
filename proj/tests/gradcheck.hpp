#pragma once

#include "chronoscope/mlp.hpp"
#include "chronoscope/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace testing_support {

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central differences with step h on every parameter of net; relative error is
// |a - n| / max(|a|, |n|). The numeric side carries round-off of about
// eps * |L| / h no matter how small the true derivative is, so a relative
// error only means something once the gradient is well above that floor.
// Below 1e4 times the floor (where 1e-4 relative would be finer than the
// round-off itself) the check is absolute: |a - n| must stay within 10 times
// the floor. This covers the exactly-zero case too (the output bias under a
// difference of two forward passes).
inline GradCheck check_gradient(const chronoscope::Mlp& net, const std::function<double(const chronoscope::Mlp&)>& loss,
                                const std::vector<double>& analytic, double h = 1e-5) {
    GradCheck out;
    chronoscope::Mlp probe = net;
    std::vector<double> theta = net.parameters();
    const double floor = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss(net))) / h;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        probe.set_parameters(theta);
        const double up = loss(probe);
        theta[i] = keep - h;
        probe.set_parameters(theta);
        const double down = loss(probe);
        theta[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
        double err = 0.0;
        if (scale < 1e4 * floor) {
            err = std::abs(analytic[i] - numeric) <= 10.0 * floor ? 0.0 : 1.0;
        } else {
            err = std::abs(analytic[i] - numeric) / scale;
        }
        if (err > out.max_rel_error) {
            out = {err, i, analytic[i], numeric};
        }
    }
    return out;
}

// Small random network with random input normalization.
inline chronoscope::Mlp random_net(chronoscope::Rng& rng, std::size_t inputs) {
    std::vector<std::size_t> sizes{inputs};
    const std::size_t hidden = rng.below(3);
    for (std::size_t i = 0; i < hidden; ++i) sizes.push_back(2 + rng.below(7));
    sizes.push_back(1);
    chronoscope::Mlp net(sizes, rng.next_u64());
    std::vector<double> mean(inputs), inv(inputs);
    for (std::size_t i = 0; i < inputs; ++i) {
        mean[i] = rng.uniform(-1.0, 1.0);
        inv[i] = rng.uniform(0.5, 2.0);
    }
    net.set_input_normalization(mean, inv);
    // perturb biases away from zero so no unit sits at a symmetric point
    std::vector<double> theta = net.parameters();
    for (double& t : theta) t += rng.uniform(-0.3, 0.3);
    net.set_parameters(theta);
    return net;
}

}  // namespace testing_support
