#pragma once

#include "hha/rslds.hpp"
#include "hha/types.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace hha::partition {

/// Argmax cells of softmax(W v + r) over the joint (state, control) box.
/// Cell i = { v : (W_i - W_k) v + (r_i - r_k) >= 0 for all k }.
struct SoftmaxPartition {
  Mat W;      ///< K x D
  Vec r;      ///< K
  Vec lower;  ///< D
  Vec upper;  ///< D

  /// Concatenates [W_x W_u] from the model.
  static SoftmaxPartition from_params(const rslds::RsldsParams& params, const Vec& lower, const Vec& upper);

  int regions() const { return static_cast<int>(W.rows()); }
  int dim() const { return static_cast<int>(W.cols()); }
  void validate() const;

  /// Argmax label; ties resolve to the lowest index.
  Mode label(const Vec& v) const;
  Vec probabilities(const Vec& v) const;
};

class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(int regions, bool value = false);

  int size() const { return size_; }
  bool operator()(Mode i, Mode j) const { return cells_[index(i, j)] != 0; }
  void set(Mode i, Mode j, bool value);
  /// Sets both (i, j) and (j, i).
  void set_symmetric(Mode i, Mode j, bool value);

  bool operator==(const AdjacencyMatrix&) const = default;

  /// Relabels: result(p[i], p[j]) = this(i, j).
  AdjacencyMatrix permuted(const std::vector<Mode>& permutation) const;

  nlohmann::json to_json() const;

 private:
  std::size_t index(Mode i, Mode j) const;

  int size_ = 0;
  std::vector<char> cells_;
};

struct AdjacencyConfig {
  double epsilon = 1e-7;
};

/// min over cell i of (W_i - W_j) v + (r_i - r_j): zero when cells i and j
/// share a boundary point inside the box, +inf when cell i is empty.
double boundary_gap(const SoftmaxPartition& partition, Mode i, Mode j);

/// Largest t such that some point of the box satisfies
/// (W_i - W_k) v + (r_i - r_k) >= t for every k != i. Positive iff region i
/// has interior within the box (+inf for a single region).
double interior_margin(const SoftmaxPartition& partition, Mode i);

bool region_nonempty(const SoftmaxPartition& partition, Mode i, const AdjacencyConfig& config = {});

bool is_adjacent(const SoftmaxPartition& partition, Mode i, Mode j, const AdjacencyConfig& config = {});

struct AdjacencyReport {
  AdjacencyMatrix adjacency;
  std::vector<Mode> empty_regions;
  std::vector<std::string> diagnostics;
};

/// Pairwise LP tests over i < j, symmetrised, diagonal true.
AdjacencyReport build_adjacency(const SoftmaxPartition& partition, const AdjacencyConfig& config = {});

}  // namespace hha::partition
