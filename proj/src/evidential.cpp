#include "evinet/evidential.hpp"

#include <cmath>
#include <string>

#include "evinet/errors.hpp"
#include "evinet/specfun.hpp"

namespace evinet {

namespace {

void validate_evidence(std::span<const double> evidence, int k) {
    if (k < 2) {
        throw validation_error("evidence: class count must be >= 2, got " + std::to_string(k));
    }
    if (static_cast<int>(evidence.size()) != k) {
        throw validation_error("evidence: expected " + std::to_string(k) + " entries, got " +
                               std::to_string(evidence.size()));
    }
    for (std::size_t j = 0; j < evidence.size(); ++j) {
        if (!std::isfinite(evidence[j]) || evidence[j] < 0.0) {
            throw validation_error("evidence[" + std::to_string(j) +
                                   "] must be finite and non-negative, got " +
                                   std::to_string(evidence[j]));
        }
    }
}

} // namespace

int EvidentialOutput::predicted_class() const {
    int best = 0;
    for (std::size_t j = 1; j < evidence.size(); ++j) {
        if (evidence[j] > evidence[best]) best = static_cast<int>(j);
    }
    return best;
}

int grade_of(double u) {
    if (!(u >= 0.0 && u <= 1.0)) {
        throw validation_error("grade_of: uncertainty must lie in [0,1], got " + std::to_string(u));
    }
    // Explicit edge comparisons rather than floor(u/0.2): division puts
    // e.g. 0.6 in the wrong bin because 0.6/0.2 < 3 in binary.
    if (u < 0.2) return 1;
    if (u < 0.4) return 2;
    if (u < 0.6) return 3;
    if (u < 0.8) return 4;
    return 5;
}

EvidentialOutput from_evidence(std::span<const double> evidence, int k) {
    validate_evidence(evidence, k);
    EvidentialOutput out;
    out.evidence.assign(evidence.begin(), evidence.end());
    out.alpha.resize(evidence.size());
    double strength = 0.0;
    for (std::size_t j = 0; j < evidence.size(); ++j) {
        out.alpha[j] = evidence[j] + 1.0;
        strength += out.alpha[j];
    }
    out.strength = strength;
    out.probs.resize(evidence.size());
    for (std::size_t j = 0; j < evidence.size(); ++j) out.probs[j] = out.alpha[j] / strength;
    out.uncertainty = static_cast<double>(k) / strength;
    out.grade = grade_of(out.uncertainty);
    return out;
}

LossResult evidential_loss(std::span<const double> evidence, int true_class,
                           const ClassWeights& weights) {
    const int k = static_cast<int>(weights.w.size());
    validate_evidence(evidence, k);
    if (true_class < 0 || true_class >= k) {
        throw validation_error("evidential_loss: class index " + std::to_string(true_class) +
                               " outside [0," + std::to_string(k) + ")");
    }
    // Zero weights are tolerated (they null the learning signal exactly);
    // negatives and non-finites are not.
    for (double wj : weights.w) {
        if (!std::isfinite(wj) || wj < 0.0) {
            throw validation_error("evidential_loss: class weights must be non-negative");
        }
    }

    double strength = 0.0;
    for (double e : evidence) strength += e + 1.0;
    const double alpha_c = evidence[true_class] + 1.0;
    const double wc = weights.w[true_class];

    LossResult r;
    r.value = wc * (digamma(strength) - digamma(alpha_c));
    const double dS = wc * trigamma(strength);
    r.grad_evidence.assign(evidence.size(), dS);
    r.grad_evidence[true_class] = dS - wc * trigamma(alpha_c);
    return r;
}

ClassWeights class_weights_from_counts(std::span<const std::int64_t> counts) {
    if (counts.empty()) {
        throw validation_error("class_weights_from_counts: empty counts");
    }
    ClassWeights cw;
    cw.w.resize(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (counts[j] < 1) {
            throw validation_error("class_weights_from_counts: class " + std::to_string(j) +
                                   " has count " + std::to_string(counts[j]) +
                                   "; every class needs at least one training sample");
        }
        cw.w[j] = 1.0 / static_cast<double>(counts[j]);
    }
    return cw;
}

} // namespace evinet
