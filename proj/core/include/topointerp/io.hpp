#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "topointerp/field.hpp"
#include "topointerp/network.hpp"
#include "topointerp/persistence.hpp"

namespace topointerp {

/// Field series file "TSF1": magic, u8 dims, u32 c_x c_y c_z, u32 N, u32
/// bitmap byte count, keyframe bitmap (bit k of byte k/8, LSB first), then N
/// blocks of n_v float32. All integers little-endian. Missing fields are
/// written as NaN blocks and read back as empty fields.
void write_series(std::ostream& out, const ScalarFieldSeries& series);
ScalarFieldSeries read_series(std::istream& in);
void write_series(const std::filesystem::path& path, const ScalarFieldSeries& series);
ScalarFieldSeries read_series(const std::filesystem::path& path);

/// Header length of a TSF1 file for `count` timesteps.
std::size_t series_header_bytes(std::size_t count);

/// CSV with header type,birth,death,birth_vertex,death_vertex. Infinite pairs
/// have death "inf" and death_vertex -1.
void write_diagram_csv(std::ostream& out, const PersistenceDiagram& diagram);
PersistenceDiagram read_diagram_csv(std::istream& in);
void write_diagram_csv(const std::filesystem::path& path, const PersistenceDiagram& diagram);
PersistenceDiagram read_diagram_csv(const std::filesystem::path& path);

/// dg_%05d.csv
std::string diagram_file_name(std::size_t timestep);
void write_diagram_dir(const std::filesystem::path& dir, const std::vector<PersistenceDiagram>& diagrams);
/// Reads dg_00000.csv, dg_00001.csv, ... until the first missing index.
std::vector<PersistenceDiagram> read_diagram_dir(const std::filesystem::path& dir);

/// Checkpoint "TTM1": magic, u32 config length, config text, u32 array
/// count, then per array u16 name length, name, u8 rank, u32 dims, u8 frozen
/// flag and float32 data.
struct Checkpoint {
  std::string config_text;
  nn::ModelParameters params;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// 8-bit binary graymap, pixel = round(255 * clamp(v, 0, 1)). 3D fields need
/// a slice: axis 0..2 and an index along it. Rows run along y (or the second
/// remaining axis).
void export_image(const ScalarField& field, const std::filesystem::path& path, int slice_axis = -1,
                  int slice_index = 0);
std::vector<std::uint8_t> image_pixels(const ScalarField& field, int slice_axis, int slice_index,
                                       int* width, int* height);

}  // namespace topointerp
