#pragma once

#include <compare>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coride {

using GridId = int;
using DistrictId = int;

/// Axial hex coordinate, pointy-top orientation.
struct Axial {
  int q = 0;
  int r = 0;
  auto operator<=>(const Axial&) const = default;
};

inline constexpr Axial kHexDirections[6] = {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}};

int hex_distance(Axial a, Axial b);

/// Either a hex-of-hexes radius or an explicit cell list. District labels are
/// optional; without them districts are tiled as 7-cell flowers.
struct WorldSpec {
  std::optional<int> radius;
  std::vector<Axial> cells;
  std::vector<int> district_labels;
  double cell_radius_km = 1.3;
};

class GridWorld {
 public:
  int size() const { return static_cast<int>(coords_.size()); }
  int district_count() const { return static_cast<int>(members_.size()); }
  int max_district_size() const { return max_district_size_; }

  bool contains(GridId g) const { return g >= 0 && g < size(); }
  Axial coord(GridId g) const;
  std::optional<GridId> find(Axial a) const;

  std::span<const GridId> neighbors(GridId g) const;
  bool adjacent(GridId a, GridId b) const;

  DistrictId district_of(GridId g) const;
  std::span<const GridId> members(DistrictId d) const;
  std::span<const DistrictId> adjacent_districts(DistrictId d) const;

  /// Hop distance under the neighbor relation.
  int distance(GridId a, GridId b) const;
  int diameter() const { return diameter_; }

  // Metadata only; movement is hop based.
  double cell_radius_km() const { return cell_radius_km_; }

 private:
  friend GridWorld build_world(const WorldSpec& spec);

  std::vector<Axial> coords_;
  std::vector<std::vector<GridId>> neighbors_;
  std::vector<DistrictId> district_;
  std::vector<std::vector<GridId>> members_;
  std::vector<std::vector<DistrictId>> district_neighbors_;
  std::vector<int> distances_;  // row-major size() x size()
  int max_district_size_ = 0;
  int diameter_ = 0;
  double cell_radius_km_ = 1.3;
};

/// Builds a connected world with dense row-major ids (sorted by r, then q).
/// Throws std::invalid_argument on an empty, duplicated or disconnected spec.
GridWorld build_world(const WorldSpec& spec);

int grid_distance(const GridWorld& world, GridId a, GridId b);

/// Reads the plain-text world format:
///
///     ; hex of hexes
///     radius = 2
///
/// or an explicit listing, districts optional and aligned with cells:
///
///     cells = 0,0 1,0 0,1
///     districts = 0 0 1
///     cell_radius_km = 1.3
WorldSpec parse_world_spec(std::istream& in);
WorldSpec load_world_spec(const std::string& path);
void write_world_spec(std::ostream& out, const GridWorld& world);

/// Human-readable listing of ids, coordinates, districts and neighbors.
void describe_world(std::ostream& out, const GridWorld& world);

}  // namespace coride
