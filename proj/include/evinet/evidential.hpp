#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace evinet {

// Dirichlet view of a non-negative evidence vector:
//   alpha_j = e_j + 1,   S = sum alpha_j,   p_j = alpha_j / S,   u = K / S.
// u is 1 exactly when all evidence is zero and shrinks as evidence grows.
struct EvidentialOutput {
    std::vector<double> evidence;
    std::vector<double> alpha;
    std::vector<double> probs;
    double strength = 0.0;
    double uncertainty = 1.0;
    int grade = 5;

    // argmax of evidence (equivalently probs); ties go to the lowest index.
    int predicted_class() const;
};

struct ClassWeights {
    std::vector<double> w;
};

struct LossResult {
    double value = 0.0;
    std::vector<double> grad_evidence;
};

// Maps uncertainty in [0,1] to grade 1..5 over even bins of width 0.2;
// the upper edge 1.0 belongs to grade 5.
int grade_of(double u);

// Derives the full Dirichlet view from raw evidence. k must equal
// evidence.size() and be >= 2; entries must be finite and >= 0.
EvidentialOutput from_evidence(std::span<const double> evidence, int k);

// Per-subject loss  w_c * (psi(S) - psi(alpha_c))  for true class c, with
// its analytic gradient in the evidence:
//   dL/de_j = w_c * psi'(S)                   for j != c
//   dL/de_c = w_c * (psi'(S) - psi'(alpha_c)).
LossResult evidential_loss(std::span<const double> evidence, int true_class,
                           const ClassWeights& weights);

// w_j = 1 / counts_j. A zero count is a configuration fault.
ClassWeights class_weights_from_counts(std::span<const std::int64_t> counts);

} // namespace evinet
