#pragma once

#include <cstddef>
#include <vector>

namespace ncd {

// A batch of anchor embeddings Z and second-view embeddings Zp with optional
// per-row class labels (-1 == unlabelled). Rows are expected unit-normalized;
// dot products act as cosine logits scaled by 1/tau.
struct LossBatch {
    std::size_t b = 0;
    std::size_t d = 0;
    std::vector<double> z;  // b x d, row-major
    std::vector<double> zp; // b x d
    std::vector<int> labels; // length b, -1 for unlabelled
    double tau = 0.07;
    double lambda = 0.25;
    // When true, the unsupervised denominator also includes the positive pair
    // (the common InfoNCE variant); default follows the excluded-positive form.
    bool include_positive = false;

    const double* z_row(std::size_t i) const { return z.data() + i * d; }
    const double* zp_row(std::size_t i) const { return zp.data() + i * d; }
};

void check_batch(const LossBatch& batch);

// -log( exp(z_i.zp_i/tau) / sum_{n!=i} exp(z_i.zp_n/tau) ), stabilized by
// max-logit subtraction. Can be negative: the positive pair is excluded from
// the denominator.
double unsup_loss(const LossBatch& batch, std::size_t i);

// -(1/|N(i)|) sum_{q in N(i)} log( exp(z_i.z_q/tau) / sum_{n!=i} exp(z_i.z_n/tau) )
// where N(i) is the set of other rows sharing i's label; all logits are within
// the anchor view.
double sup_loss(const LossBatch& batch, std::size_t i);

// (1-lambda) * sum_i unsup_loss(i) + lambda * sum_{labelled i} sup_loss(i)
double total_loss(const LossBatch& batch);

struct LossGrad {
    std::vector<double> dz;  // b x d
    std::vector<double> dzp; // b x d
};

// Exact analytic gradient of total_loss with respect to every entry of Z and
// Zp, treating rows as free vectors.
LossGrad total_loss_grad(const LossBatch& batch);

} // namespace ncd
