#include "branchlim/tree.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace branchlim {

namespace {

// Number of nodes the preorder sequence still owes after each prefix; a
// valid tree reaches zero exactly at its last entry.
bool is_complete_preorder(std::span<const std::uint32_t> degrees) {
  if (degrees.empty()) return false;
  std::uint64_t owed = 1;
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    if (owed == 0) return false;
    owed = owed - 1 + degrees[i];
  }
  return owed == 0;
}

std::uint32_t parse_u32(std::string_view tok) {
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw std::invalid_argument("not a nonnegative integer: '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < text.size() && !(text[j] == ' ' || text[j] == '\t' || text[j] == '\n' || text[j] == '\r')) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

PlaneTree::PlaneTree() : degrees_{0} {}

PlaneTree PlaneTree::from_preorder(std::vector<std::uint32_t> degrees) {
  if (!is_complete_preorder(degrees)) {
    throw std::invalid_argument("degree sequence is not the preorder of a finite tree");
  }
  return PlaneTree(std::move(degrees));
}

PlaneTree PlaneTree::from_level_order(std::span<const std::uint32_t> degrees) {
  if (!is_complete_preorder(degrees)) {
    // Level order and preorder have the same completeness condition.
    throw std::invalid_argument("degree sequence is not the level order of a finite tree");
  }
  const std::size_t n = degrees.size();
  std::vector<std::size_t> first_child(n);
  std::size_t next = 1;
  for (std::size_t i = 0; i < n; ++i) {
    first_child[i] = next;
    next += degrees[i];
  }
  std::vector<std::uint32_t> pre;
  pre.reserve(n);
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    pre.push_back(degrees[u]);
    for (std::uint32_t c = degrees[u]; c > 0; --c) stack.push_back(first_child[u] + c - 1);
  }
  return PlaneTree(std::move(pre));
}

PlaneTree PlaneTree::from_labels(const std::vector<Label>& labels) {
  std::map<Label, std::uint32_t> kids;
  for (const auto& u : labels) {
    if (!kids.emplace(u, 0).second) throw std::invalid_argument("duplicate label");
  }
  if (!kids.contains(Label{})) throw std::invalid_argument("root missing");
  for (const auto& [u, _] : kids) {
    if (u.empty()) continue;
    if (u.back() == 0) throw std::invalid_argument("labels use positive integers");
    Label parent(u.begin(), u.end() - 1);
    auto it = kids.find(parent);
    if (it == kids.end()) throw std::invalid_argument("ancestor missing");
    it->second = std::max(it->second, u.back());
  }
  // Children per node never exceed the largest index, so the sum of largest
  // indices matches the non-root count iff every index set is 1..k_u.
  std::size_t slots = 0;
  for (const auto& [u, k] : kids) slots += k;
  if (slots + 1 != kids.size()) {
    throw std::invalid_argument("child indices are not contiguous");
  }
  // std::map orders labels lexicographically, which is preorder.
  std::vector<std::uint32_t> pre;
  pre.reserve(kids.size());
  for (const auto& [u, k] : kids) pre.push_back(k);
  return from_preorder(std::move(pre));
}

PlaneTree PlaneTree::parse(std::string_view text) {
  std::vector<std::uint32_t> deg;
  for (auto tok : split_ws(text)) deg.push_back(parse_u32(tok));
  return from_preorder(std::move(deg));
}

std::string PlaneTree::to_string() const {
  std::string s;
  s.reserve(degrees_.size() * 2);
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    if (i) s.push_back(' ');
    s += std::to_string(degrees_[i]);
  }
  return s;
}

std::vector<Label> PlaneTree::labels() const {
  std::vector<Label> out;
  out.reserve(degrees_.size());
  // Stack frames: label of the parent and the next child index to hand out.
  struct Frame {
    Label label;
    std::uint32_t remaining;
    std::uint32_t next;
  };
  std::vector<Frame> stack;
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    Label u;
    if (!stack.empty()) {
      u = stack.back().label;
      u.push_back(stack.back().next++);
      if (--stack.back().remaining == 0) stack.pop_back();
    }
    out.push_back(u);
    if (degrees_[i] > 0) stack.push_back({std::move(u), degrees_[i], 1});
  }
  return out;
}

std::vector<std::uint32_t> PlaneTree::depths() const {
  std::vector<std::uint32_t> d(degrees_.size());
  struct Open {
    std::uint32_t child_depth;
    std::uint32_t remaining;
  };
  std::vector<Open> stack;
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    std::uint32_t depth = 0;
    if (!stack.empty()) {
      depth = stack.back().child_depth;
      if (--stack.back().remaining == 0) stack.pop_back();
    }
    d[i] = depth;
    if (degrees_[i] > 0) stack.push_back({depth + 1, degrees_[i]});
  }
  return d;
}

std::size_t PlaneTreeHash::operator()(const PlaneTree& t) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto d : t.degrees()) {
    h ^= d + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

std::string DegreeSet::to_string() const {
  std::ostringstream os;
  auto list = [&] {
    os << '{';
    bool first = true;
    for (auto k : listed_) {
      if (!first) os << ',';
      os << k;
      first = false;
    }
    os << '}';
  };
  if (cofinite_) {
    os << "all";
    if (!listed_.empty()) {
      os << '\\';
      list();
    }
  } else {
    list();
  }
  return os.str();
}

DegreeSet DegreeSet::parse(std::string_view text) {
  auto parse_list = [](std::string_view body) {
    if (body.size() < 2 || body.front() != '{' || body.back() != '}') {
      throw std::invalid_argument("degree set must look like {0,2}, all or all\\{1}");
    }
    std::set<std::uint32_t> out;
    body = body.substr(1, body.size() - 2);
    std::size_t i = 0;
    while (i < body.size()) {
      std::size_t j = body.find(',', i);
      if (j == std::string_view::npos) j = body.size();
      auto tok = body.substr(i, j - i);
      while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
      while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
      if (!tok.empty()) out.insert(parse_u32(tok));
      i = j + 1;
    }
    return out;
  };
  if (text == "all") return all();
  if (text.starts_with("all\\")) return all_except(parse_list(text.substr(4)));
  return of(parse_list(text));
}

std::string FunctionalTag::name() const {
  switch (kind) {
    case Kind::Height: return "height";
    case Kind::Width: return "width";
    case Kind::MaxOutDegree: return "maxdeg";
    case Kind::TotalProgeny: return "progeny";
    case Kind::CountInSet: return "count" + set.to_string();
  }
  return "?";
}

FunctionalTag FunctionalTag::parse(std::string_view text) {
  if (text == "height") return height();
  if (text == "width") return width();
  if (text == "maxdeg") return max_out_degree();
  if (text == "progeny") return total_progeny();
  if (text.starts_with("count")) return count_in_set(DegreeSet::parse(text.substr(5)));
  throw std::invalid_argument("unknown functional '" + std::string(text) + "'");
}

std::size_t generation_size(const PlaneTree& t, std::size_t h) {
  const auto g = generation_sizes(t);
  return h < g.size() ? g[h] : 0;
}

std::vector<std::size_t> generation_sizes(const PlaneTree& t) {
  std::vector<std::size_t> g;
  for (auto d : t.depths()) {
    if (d >= g.size()) g.resize(d + 1, 0);
    ++g[d];
  }
  return g;
}

std::vector<std::size_t> generation_sizes(const Forest& f) {
  std::vector<std::size_t> g;
  for (const auto& t : f.trees) {
    auto gt = generation_sizes(t);
    if (gt.size() > g.size()) g.resize(gt.size(), 0);
    for (std::size_t h = 0; h < gt.size(); ++h) g[h] += gt[h];
  }
  return g;
}

std::size_t functional(const PlaneTree& t, const FunctionalTag& f) {
  using K = FunctionalTag::Kind;
  switch (f.kind) {
    case K::Height: return generation_sizes(t).size() - 1;
    case K::Width: {
      auto g = generation_sizes(t);
      return *std::max_element(g.begin(), g.end());
    }
    case K::MaxOutDegree: {
      auto d = t.degrees();
      return *std::max_element(d.begin(), d.end());
    }
    case K::TotalProgeny: return t.size();
    case K::CountInSet: {
      std::size_t c = 0;
      for (auto k : t.degrees()) c += f.set.contains(k) ? 1 : 0;
      return c;
    }
  }
  return 0;
}

std::size_t functional(const Forest& forest, const FunctionalTag& f) {
  using K = FunctionalTag::Kind;
  if (forest.empty()) return 0;
  switch (f.kind) {
    case K::Height:
    case K::MaxOutDegree: {
      std::size_t m = 0;
      for (const auto& t : forest.trees) m = std::max(m, functional(t, f));
      return m;
    }
    case K::Width: {
      auto g = generation_sizes(forest);
      return *std::max_element(g.begin(), g.end());
    }
    case K::TotalProgeny:
    case K::CountInSet: {
      std::size_t s = 0;
      for (const auto& t : forest.trees) s += functional(t, f);
      return s;
    }
  }
  return 0;
}

PlaneTree restrict_height(const PlaneTree& t, std::size_t h) {
  const auto deg = t.degrees();
  const auto dep = t.depths();
  std::vector<std::uint32_t> out;
  out.reserve(deg.size());
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (dep[i] > h) continue;
    out.push_back(dep[i] == h ? 0 : deg[i]);
  }
  return PlaneTree::from_preorder(std::move(out));
}

Forest subtrees_above(const PlaneTree& t, std::size_t b) {
  const auto deg = t.degrees();
  const auto dep = t.depths();
  Forest f;
  std::size_t i = 0;
  while (i < deg.size()) {
    if (dep[i] != b) {
      ++i;
      continue;
    }
    // The subtree of a node is the contiguous preorder block of deeper nodes.
    std::size_t j = i + 1;
    while (j < deg.size() && dep[j] > b) ++j;
    f.trees.push_back(PlaneTree::from_preorder({deg.begin() + i, deg.begin() + j}));
    i = j;
  }
  return f;
}

double ultrametric_distance(const PlaneTree& t, const PlaneTree& s) {
  if (t == s) return 0.0;
  // r_0 always agrees (both are the root); find the first height that differs.
  std::size_t h = 1;
  while (restrict_height(t, h) == restrict_height(s, h)) ++h;
  return std::ldexp(1.0, -static_cast<int>(h - 1));
}

}  // namespace branchlim
