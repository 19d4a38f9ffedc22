#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "dcfl/nn.hpp"
#include "dcfl/partition.hpp"
#include "dcfl/tensor.hpp"

namespace dcfl {

/// Linear CKA between two representations of the same n >= 2 examples
/// (rows). Columns are mean-centered, then
///   ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F).
/// Throws DegenerateInputError when either centered input is all zero.
double linear_cka(const Tensor2& x, const Tensor2& y);

/// Classifier as a representation: one row per class, hidden weights with
/// the bias appended as a final column.
Tensor2 classifier_representation(const Layer& classifier);

/// linear_cka of the two classifier representations.
double cka_between_classifiers(const Layer& a, const Layer& b);

/// Penultimate activations of `model` on `probe` (activation-based CKA).
Tensor2 activation_representation(const ModelParams& model, const Tensor2& probe);

/// Symmetric client-by-client CKA scores. Clients are kept in ascending id
/// order together with the representation each score was computed from.
class CkaMatrix {
public:
    struct Entry {
        std::size_t client;
        Tensor2 representation;
    };

    /// Matrix with given scores (row-major over `ids`, ascending). It holds
    /// no representations, so later update() calls throw ShapeError.
    static CkaMatrix from_scores(std::vector<std::size_t> ids, std::vector<double> values);

    /// Inserts or replaces clients, recomputing every affected pair.
    void update(std::span<const Entry> entries);

    const std::vector<std::size_t>& clients() const noexcept { return ids_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool contains(std::size_t client) const noexcept;

    /// Score between two stored clients.
    double at(std::size_t client_a, std::size_t client_b) const;
    /// Score by position in clients().
    double value(std::size_t i, std::size_t j) const { return values_[i * ids_.size() + j]; }

    /// Sum of a client's scores against every other stored client.
    double off_diagonal_row_sum(std::size_t client) const;

    /// CSV: header row of client ids, then one row of scores per client.
    void write_csv(std::ostream& out) const;

private:
    std::size_t position(std::size_t client) const;
    double score(const Tensor2& a, const Tensor2& b) const;

    std::vector<std::size_t> ids_;
    std::vector<Tensor2> reps_;
    std::vector<double> values_;
};

/// Builds the matrix from scratch in one pass.
CkaMatrix build_cka_matrix(std::span<const CkaMatrix::Entry> entries);

/// sum_i |p_i - q_i|
double emd(const LabelDistribution& p, const LabelDistribution& q);

/// ||w_a - w_ref|| / ||w_ref|| over all flattened parameters.
double weight_divergence(const ModelParams& w_a, const ModelParams& w_ref);

/// ||w_m - w_n|| / ||w_ref|| (pairwise form).
double weight_divergence(const ModelParams& w_m, const ModelParams& w_n, const ModelParams& w_ref);

/// Spearman rank correlation; tied values share their average rank.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace dcfl
