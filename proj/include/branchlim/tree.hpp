#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace branchlim {

/// Ulam-Harris label: the root is the empty sequence, child i of u is u.i (i >= 1).
using Label = std::vector<std::uint32_t>;

/// A finite rooted ordered tree.
///
/// Stored canonically as the out-degree of every node in depth-first preorder,
/// so two trees are equal iff their label sets are equal iff their degree
/// sequences are equal. The text form is the same sequence separated by
/// spaces ("2 0 1 0" is the tree {root, 1, 2, 21}).
class PlaneTree {
 public:
  /// The single-node tree {root}.
  PlaneTree();

  /// Throws std::invalid_argument unless `degrees` is a complete preorder
  /// degree sequence of one tree.
  static PlaneTree from_preorder(std::vector<std::uint32_t> degrees);

  /// Builds from degrees listed in breadth-first (level) order.
  static PlaneTree from_level_order(std::span<const std::uint32_t> degrees);

  /// Throws std::invalid_argument if the set is not prefix-closed with
  /// contiguous child indices.
  static PlaneTree from_labels(const std::vector<Label>& labels);

  static PlaneTree parse(std::string_view text);

  std::string to_string() const;
  std::vector<Label> labels() const;

  std::span<const std::uint32_t> degrees() const { return degrees_; }
  std::size_t size() const { return degrees_.size(); }

  /// Depth |u| of each node, in preorder.
  std::vector<std::uint32_t> depths() const;

  friend bool operator==(const PlaneTree&, const PlaneTree&) = default;
  friend std::strong_ordering operator<=>(const PlaneTree& a, const PlaneTree& b) {
    return a.degrees_ <=> b.degrees_;
  }

 private:
  explicit PlaneTree(std::vector<std::uint32_t> degrees) : degrees_(std::move(degrees)) {}

  std::vector<std::uint32_t> degrees_;
};

struct PlaneTreeHash {
  std::size_t operator()(const PlaneTree& t) const noexcept;
};

/// Ordered finite sequence of trees; roots all sit at height 0.
struct Forest {
  std::vector<PlaneTree> trees;

  bool empty() const { return trees.empty(); }
  std::size_t size() const { return trees.size(); }
  friend bool operator==(const Forest&, const Forest&) = default;
};

/// A subset of the nonnegative integers that is either finite or the
/// complement of a finite set, so membership is decidable on all of Z+.
class DegreeSet {
 public:
  static DegreeSet all() { return DegreeSet({}, true); }
  static DegreeSet of(std::set<std::uint32_t> members) { return DegreeSet(std::move(members), false); }
  static DegreeSet all_except(std::set<std::uint32_t> excluded) {
    return DegreeSet(std::move(excluded), true);
  }

  bool contains(std::uint32_t k) const { return cofinite_ ? !listed_.contains(k) : listed_.contains(k); }
  bool is_cofinite() const { return cofinite_; }
  const std::set<std::uint32_t>& listed() const { return listed_; }

  /// "all", "{0,2}" or "all\{1}".
  std::string to_string() const;
  static DegreeSet parse(std::string_view text);

  friend bool operator==(const DegreeSet&, const DegreeSet&) = default;

 private:
  DegreeSet(std::set<std::uint32_t> listed, bool cofinite)
      : listed_(std::move(listed)), cofinite_(cofinite) {}

  std::set<std::uint32_t> listed_;
  bool cofinite_;
};

struct FunctionalTag {
  enum class Kind { Height, Width, MaxOutDegree, CountInSet, TotalProgeny };

  Kind kind = Kind::Height;
  DegreeSet set = DegreeSet::all();  // only meaningful for CountInSet

  static FunctionalTag height() { return {Kind::Height, DegreeSet::all()}; }
  static FunctionalTag width() { return {Kind::Width, DegreeSet::all()}; }
  static FunctionalTag max_out_degree() { return {Kind::MaxOutDegree, DegreeSet::all()}; }
  static FunctionalTag total_progeny() { return {Kind::TotalProgeny, DegreeSet::all()}; }
  static FunctionalTag count_in_set(DegreeSet s) { return {Kind::CountInSet, std::move(s)}; }

  /// Max-type functionals satisfy A(forest) = max over component trees.
  bool is_max_type() const { return kind == Kind::Height || kind == Kind::MaxOutDegree; }

  std::string name() const;
  static FunctionalTag parse(std::string_view text);

  friend bool operator==(const FunctionalTag&, const FunctionalTag&) = default;
};

/// Y_h(t): number of nodes at height h.
std::size_t generation_size(const PlaneTree& t, std::size_t h);

/// (Y_0(t), Y_1(t), ..., Y_H(t)).
std::vector<std::size_t> generation_sizes(const PlaneTree& t);
std::vector<std::size_t> generation_sizes(const Forest& f);

std::size_t functional(const PlaneTree& t, const FunctionalTag& f);

/// Forest version: Height and MaxOutDegree are maxima over components,
/// Width is the largest combined generation, the counts are sums. The empty
/// forest has every functional equal to 0.
std::size_t functional(const Forest& f, const FunctionalTag& tag);

/// r_h(t) = {u in t : |u| <= h}.
PlaneTree restrict_height(const PlaneTree& t, std::size_t h);

/// The Y_b(t) subtrees rooted at height b, in lexicographic order of their roots.
Forest subtrees_above(const PlaneTree& t, std::size_t b);

/// 2^{-sup{h : r_h(t) = r_h(s)}}, 0 iff t == s.
double ultrametric_distance(const PlaneTree& t, const PlaneTree& s);

}  // namespace branchlim
