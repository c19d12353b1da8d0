#pragma once

namespace sgc {

// Derivative of lgamma. Recurrence below 10, asymptotic Bernoulli series above.
// Absolute error stays under 1e-12 for arguments greater than 1e-6.
double digamma(double x);

}  // namespace sgc
