#include "ncd/losses.hpp"
#include "ncd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ncd {

namespace {

double dot(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += a[j] * b[j];
    return s;
}

// log sum exp over the masked logits, stabilized by max subtraction.
double lse(const std::vector<double>& logits, const std::vector<bool>& mask) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < logits.size(); ++n)
        if (mask[n]) m = std::max(m, logits[n]);
    double s = 0.0;
    for (std::size_t n = 0; n < logits.size(); ++n)
        if (mask[n]) s += std::exp(logits[n] - m);
    return m + std::log(s);
}

// softmax over the masked logits; zero elsewhere
std::vector<double> softmax(const std::vector<double>& logits,
                            const std::vector<bool>& mask) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < logits.size(); ++n)
        if (mask[n]) m = std::max(m, logits[n]);
    std::vector<double> p(logits.size(), 0.0);
    double s = 0.0;
    for (std::size_t n = 0; n < logits.size(); ++n)
        if (mask[n]) {
            p[n] = std::exp(logits[n] - m);
            s += p[n];
        }
    for (auto& x : p) x /= s;
    return p;
}

std::vector<std::size_t> positives(const LossBatch& batch, std::size_t i) {
    std::vector<std::size_t> n;
    for (std::size_t q = 0; q < batch.b; ++q)
        if (q != i && batch.labels[q] >= 0 && batch.labels[q] == batch.labels[i])
            n.push_back(q);
    return n;
}

} // namespace

void check_batch(const LossBatch& batch) {
    if (batch.b == 0 || batch.d == 0)
        throw InputError("loss batch is empty");
    if (batch.z.size() != batch.b * batch.d || batch.zp.size() != batch.b * batch.d)
        throw InputError("Z/Zp shape mismatch");
    if (batch.labels.size() != batch.b)
        throw InputError("labels length mismatch");
    if (!(batch.tau > 0.0)) throw InputError("tau must be positive");
    if (batch.lambda < 0.0 || batch.lambda > 1.0)
        throw InputError("lambda must be in [0, 1]");
}

double unsup_loss(const LossBatch& batch, std::size_t i) {
    check_batch(batch);
    if (batch.b < 2) throw InputError("unsup_loss: batch size must be >= 2");

    std::vector<double> logits(batch.b);
    for (std::size_t n = 0; n < batch.b; ++n)
        logits[n] = dot(batch.z_row(i), batch.zp_row(n), batch.d) / batch.tau;
    std::vector<bool> mask(batch.b, true);
    if (!batch.include_positive) mask[i] = false;
    return -logits[i] + lse(logits, mask);
}

double sup_loss(const LossBatch& batch, std::size_t i) {
    check_batch(batch);
    if (batch.labels[i] < 0) throw InputError("sup_loss: row is unlabelled");
    auto pos = positives(batch, i);
    if (pos.empty()) throw InputError("sup_loss: empty positive set");

    std::vector<double> logits(batch.b);
    for (std::size_t n = 0; n < batch.b; ++n)
        logits[n] = dot(batch.z_row(i), batch.z_row(n), batch.d) / batch.tau;
    std::vector<bool> mask(batch.b, true);
    mask[i] = false;
    double denom = lse(logits, mask);

    double s = 0.0;
    for (std::size_t q : pos) s += -logits[q] + denom;
    return s / static_cast<double>(pos.size());
}

double total_loss(const LossBatch& batch) {
    check_batch(batch);
    double u = 0.0, sup = 0.0;
    for (std::size_t i = 0; i < batch.b; ++i) {
        u += unsup_loss(batch, i);
        if (batch.labels[i] >= 0) sup += sup_loss(batch, i);
    }
    return (1.0 - batch.lambda) * u + batch.lambda * sup;
}

LossGrad total_loss_grad(const LossBatch& batch) {
    check_batch(batch);
    if (batch.b < 2) throw InputError("total_loss_grad: batch size must be >= 2");

    std::size_t b = batch.b, d = batch.d;
    double inv_tau = 1.0 / batch.tau;
    double wu = 1.0 - batch.lambda;
    double wl = batch.lambda;

    LossGrad g;
    g.dz.assign(b * d, 0.0);
    g.dzp.assign(b * d, 0.0);

    auto add = [d](std::vector<double>& acc, std::size_t row, double c,
                   const double* v) {
        for (std::size_t j = 0; j < d; ++j) acc[row * d + j] += c * v[j];
    };

    for (std::size_t i = 0; i < b; ++i) {
        // unsup term: L = -z_i.zp_i/tau + lse_{n in S}(z_i.zp_n/tau)
        std::vector<double> logits(b);
        for (std::size_t n = 0; n < b; ++n)
            logits[n] = dot(batch.z_row(i), batch.zp_row(n), d) * inv_tau;
        std::vector<bool> mask(b, true);
        if (!batch.include_positive) mask[i] = false;
        auto p = softmax(logits, mask);

        add(g.dz, i, -wu * inv_tau, batch.zp_row(i));
        add(g.dzp, i, -wu * inv_tau, batch.z_row(i));
        for (std::size_t n = 0; n < b; ++n)
            if (mask[n]) {
                add(g.dz, i, wu * inv_tau * p[n], batch.zp_row(n));
                add(g.dzp, n, wu * inv_tau * p[n], batch.z_row(i));
            }

        // sup term, labelled rows only; logits within the anchor view
        if (wl == 0.0 || batch.labels[i] < 0) continue;
        auto pos = positives(batch, i);
        if (pos.empty()) throw InputError("total_loss_grad: empty positive set");
        double inv_np = 1.0 / static_cast<double>(pos.size());

        std::vector<double> alogits(b);
        for (std::size_t n = 0; n < b; ++n)
            alogits[n] = dot(batch.z_row(i), batch.z_row(n), d) * inv_tau;
        std::vector<bool> amask(b, true);
        amask[i] = false;
        auto ap = softmax(alogits, amask);

        // -(1/|N|) sum_q z_i.z_q/tau part
        for (std::size_t q : pos) {
            add(g.dz, i, -wl * inv_tau * inv_np, batch.z_row(q));
            add(g.dz, q, -wl * inv_tau * inv_np, batch.z_row(i));
        }
        // + lse part (one denominator per positive, all identical)
        for (std::size_t n = 0; n < b; ++n)
            if (amask[n]) {
                add(g.dz, i, wl * inv_tau * ap[n], batch.z_row(n));
                add(g.dz, n, wl * inv_tau * ap[n], batch.z_row(i));
            }
    }
    return g;
}

} // namespace ncd
