#include "coride/hexgrid.hpp"

#include <algorithm>
#include <tuple>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace coride {

int hex_distance(Axial a, Axial b) {
  const int dq = a.q - b.q;
  const int dr = a.r - b.r;
  return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

Axial GridWorld::coord(GridId g) const {
  if (!contains(g)) throw std::out_of_range("unknown grid id " + std::to_string(g));
  return coords_[g];
}

std::optional<GridId> GridWorld::find(Axial a) const {
  auto it = std::lower_bound(coords_.begin(), coords_.end(), a, [](Axial x, Axial y) {
    return std::tie(x.r, x.q) < std::tie(y.r, y.q);
  });
  if (it == coords_.end() || *it != a) return std::nullopt;
  return static_cast<GridId>(it - coords_.begin());
}

std::span<const GridId> GridWorld::neighbors(GridId g) const {
  if (!contains(g)) throw std::out_of_range("unknown grid id " + std::to_string(g));
  return neighbors_[g];
}

bool GridWorld::adjacent(GridId a, GridId b) const {
  auto n = neighbors(a);
  return std::find(n.begin(), n.end(), b) != n.end();
}

DistrictId GridWorld::district_of(GridId g) const {
  if (!contains(g)) throw std::out_of_range("unknown grid id " + std::to_string(g));
  return district_[g];
}

std::span<const GridId> GridWorld::members(DistrictId d) const {
  if (d < 0 || d >= district_count()) throw std::out_of_range("unknown district " + std::to_string(d));
  return members_[d];
}

std::span<const DistrictId> GridWorld::adjacent_districts(DistrictId d) const {
  if (d < 0 || d >= district_count()) throw std::out_of_range("unknown district " + std::to_string(d));
  return district_neighbors_[d];
}

int GridWorld::distance(GridId a, GridId b) const {
  if (!contains(a) || !contains(b)) {
    throw std::out_of_range("unknown grid id in distance query");
  }
  return distances_[static_cast<std::size_t>(a) * size() + b];
}

int grid_distance(const GridWorld& world, GridId a, GridId b) { return world.distance(a, b); }

namespace {

std::vector<int> bfs(const std::vector<std::vector<GridId>>& adj, GridId source) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<GridId> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    GridId g = frontier.front();
    frontier.pop();
    for (GridId n : adj[g]) {
      if (dist[n] < 0) {
        dist[n] = dist[g] + 1;
        frontier.push(n);
      }
    }
  }
  return dist;
}

int positive_mod(int a, int m) { return ((a % m) + m) % m; }

// Flower centers form a coset of the index-7 sublattice {(q, r) : 3q + r = 0 mod 7}.
// The coset with the most complete flowers wins, the seed cell's coset on ties.
// Cells whose flower center lies outside the world join the nearest center.
std::vector<DistrictId> tile_flowers(const std::vector<Axial>& coords, const std::vector<int>& dist) {
  const int n = static_cast<int>(coords.size());
  // Seed: the most central cell (minimal eccentricity), lowest id on ties.
  GridId seed = 0;
  int best_ecc = -1;
  for (GridId g = 0; g < n; ++g) {
    int ecc = 0;
    for (GridId h = 0; h < n; ++h) ecc = std::max(ecc, dist[static_cast<std::size_t>(g) * n + h]);
    if (best_ecc < 0 || ecc < best_ecc) {
      best_ecc = ecc;
      seed = g;
    }
  }
  std::map<Axial, GridId> index;
  for (GridId g = 0; g < n; ++g) index[coords[g]] = g;

  auto coset = [](Axial a) { return positive_mod(3 * a.q + a.r, 7); };
  auto complete_flowers = [&](int k) {
    int count = 0;
    for (const Axial& c : coords) {
      if (coset(c) != k) continue;
      bool whole = true;
      for (Axial dir : kHexDirections) whole = whole && index.count(Axial{c.q + dir.q, c.r + dir.r});
      count += whole;
    }
    return count;
  };
  int anchor = coset(coords[seed]);
  int best_count = complete_flowers(anchor);
  for (int k = 0; k < 7; ++k) {
    const int count = complete_flowers(k);
    if (count > best_count) {
      best_count = count;
      anchor = k;
    }
  }
  auto is_center = [&](Axial a) { return coset(a) == anchor; };

  std::vector<GridId> centers;
  for (GridId g = 0; g < n; ++g) {
    if (is_center(coords[g])) centers.push_back(g);
  }

  std::vector<DistrictId> district(n, -1);
  for (std::size_t d = 0; d < centers.size(); ++d) {
    const Axial c = coords[centers[d]];
    district[centers[d]] = static_cast<DistrictId>(d);
    for (Axial dir : kHexDirections) {
      auto it = index.find(Axial{c.q + dir.q, c.r + dir.r});
      if (it != index.end()) district[it->second] = static_cast<DistrictId>(d);
    }
  }
  for (GridId g = 0; g < n; ++g) {
    if (district[g] >= 0) continue;
    int best = -1;
    for (std::size_t d = 0; d < centers.size(); ++d) {
      const int hops = dist[static_cast<std::size_t>(g) * n + centers[d]];
      if (best < 0 || hops < best) {
        best = hops;
        district[g] = static_cast<DistrictId>(d);
      }
    }
  }
  return district;
}

}  // namespace

GridWorld build_world(const WorldSpec& spec) {
  std::vector<Axial> cells;
  if (spec.radius) {
    const int n = *spec.radius;
    if (n < 0) throw std::invalid_argument("world radius must be non-negative");
    for (int q = -n; q <= n; ++q) {
      for (int r = std::max(-n, -q - n); r <= std::min(n, -q + n); ++r) cells.push_back({q, r});
    }
  } else {
    cells = spec.cells;
  }
  if (cells.empty()) throw std::invalid_argument("world spec has no cells");
  const bool labelled = !spec.district_labels.empty();
  if (labelled && spec.district_labels.size() != cells.size()) {
    throw std::invalid_argument("district labels must align with cells");
  }

  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(cells[a].r, cells[a].q) < std::tie(cells[b].r, cells[b].q);
  });

  GridWorld world;
  world.cell_radius_km_ = spec.cell_radius_km;
  std::vector<int> labels;
  for (std::size_t i : order) {
    if (!world.coords_.empty() && world.coords_.back() == cells[i]) {
      throw std::invalid_argument("duplicate cell in world spec");
    }
    world.coords_.push_back(cells[i]);
    if (labelled) labels.push_back(spec.district_labels[i]);
  }

  const int n = world.size();
  world.neighbors_.resize(n);
  for (GridId g = 0; g < n; ++g) {
    const Axial c = world.coords_[g];
    for (Axial dir : kHexDirections) {
      if (auto other = world.find(Axial{c.q + dir.q, c.r + dir.r})) world.neighbors_[g].push_back(*other);
    }
    std::sort(world.neighbors_[g].begin(), world.neighbors_[g].end());
  }

  world.distances_.assign(static_cast<std::size_t>(n) * n, 0);
  for (GridId g = 0; g < n; ++g) {
    auto row = bfs(world.neighbors_, g);
    for (GridId h = 0; h < n; ++h) {
      if (row[h] < 0) throw std::invalid_argument("world cells are not connected");
      world.distances_[static_cast<std::size_t>(g) * n + h] = row[h];
      world.diameter_ = std::max(world.diameter_, row[h]);
    }
  }

  if (labelled) {
    std::set<int> distinct(labels.begin(), labels.end());
    std::map<int, DistrictId> dense;
    for (int label : distinct) dense.emplace(label, static_cast<DistrictId>(dense.size()));
    world.district_.resize(n);
    for (GridId g = 0; g < n; ++g) world.district_[g] = dense.at(labels[g]);
  } else {
    world.district_ = tile_flowers(world.coords_, world.distances_);
  }

  DistrictId districts = 0;
  for (DistrictId d : world.district_) districts = std::max(districts, d + 1);
  world.members_.resize(districts);
  for (GridId g = 0; g < n; ++g) world.members_[world.district_[g]].push_back(g);
  for (const auto& m : world.members_) {
    world.max_district_size_ = std::max(world.max_district_size_, static_cast<int>(m.size()));
  }

  world.district_neighbors_.resize(districts);
  for (GridId g = 0; g < n; ++g) {
    for (GridId h : world.neighbors_[g]) {
      const DistrictId a = world.district_[g];
      const DistrictId b = world.district_[h];
      if (a != b) world.district_neighbors_[a].push_back(b);
    }
  }
  for (auto& adj : world.district_neighbors_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return world;
}

namespace {

Axial parse_axial(const std::string& token) {
  const auto comma = token.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("malformed cell '" + token + "', expected q,r");
  try {
    std::size_t used_q = 0;
    std::size_t used_r = 0;
    const std::string q = token.substr(0, comma);
    const std::string r = token.substr(comma + 1);
    Axial a{std::stoi(q, &used_q), std::stoi(r, &used_r)};
    if (used_q != q.size() || used_r != r.size()) throw std::invalid_argument(token);
    return a;
  } catch (const std::logic_error&) {
    throw std::invalid_argument("malformed cell '" + token + "', expected q,r");
  }
}

}  // namespace

WorldSpec parse_world_spec(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("world spec: ") + e.what());
  }
  WorldSpec spec;
  for (const auto& [key, node] : tree) {
    const std::string value = node.get_value<std::string>();
    if (key == "radius") {
      spec.radius = node.get_value<int>();
    } else if (key == "cells") {
      std::istringstream tokens(value);
      std::string token;
      while (tokens >> token) spec.cells.push_back(parse_axial(token));
    } else if (key == "districts") {
      std::istringstream tokens(value);
      int label = 0;
      while (tokens >> label) spec.district_labels.push_back(label);
      if (!tokens.eof()) throw std::invalid_argument("world spec: malformed districts list");
    } else if (key == "cell_radius_km") {
      spec.cell_radius_km = node.get_value<double>();
    } else {
      throw std::invalid_argument("world spec: unknown key '" + key + "'");
    }
  }
  if (spec.radius && !spec.cells.empty()) {
    throw std::invalid_argument("world spec: give either radius or cells, not both");
  }
  if (!spec.radius && spec.cells.empty()) throw std::invalid_argument("world spec is empty");
  return spec;
}

WorldSpec load_world_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open world spec " + path);
  return parse_world_spec(in);
}

void write_world_spec(std::ostream& out, const GridWorld& world) {
  out << "cells =";
  for (GridId g = 0; g < world.size(); ++g) out << ' ' << world.coord(g).q << ',' << world.coord(g).r;
  out << "\ndistricts =";
  for (GridId g = 0; g < world.size(); ++g) out << ' ' << world.district_of(g);
  out << "\ncell_radius_km = " << world.cell_radius_km() << '\n';
}

void describe_world(std::ostream& out, const GridWorld& world) {
  out << "grids " << world.size() << " districts " << world.district_count() << " diameter "
      << world.diameter() << '\n';
  out << "id,q,r,district,neighbors\n";
  for (GridId g = 0; g < world.size(); ++g) {
    out << g << ',' << world.coord(g).q << ',' << world.coord(g).r << ',' << world.district_of(g) << ',';
    bool first = true;
    for (GridId n : world.neighbors(g)) {
      out << (first ? "" : " ") << n;
      first = false;
    }
    out << '\n';
  }
}

}  // namespace coride
