#pragma once

#include "serialtrack/descriptor.hpp"
#include "serialtrack/grid_field.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace serialtrack {

/// Shortest decimal text that round-trips to the same double.
std::string format_number(double v);

/// Writes `<stem>.raw` (little-endian float32, x fastest) and `<stem>.json`
/// ({"dims": [...], "dtype": "f32", "order": "row-major", "data": "<stem>.raw"}).
/// Returns the header path.
template <int Dim>
std::filesystem::path write_image(const std::filesystem::path& stem, const Image<Dim>& image);

/// Reads an image from its JSON header; the raw path is relative to the
/// header. Throws InputMissing, IoError or DimMismatch.
template <int Dim>
Image<Dim> read_image(const std::filesystem::path& header);

/// `id,x,y[,z]`
template <int Dim>
void write_particles_csv(std::ostream& os, const ParticleSet<Dim>& particles);
template <int Dim>
ParticleSet<Dim> read_particles_csv(const std::filesystem::path& path);

/// `idA,xA,yA[,zA],ux,uy[,uz]` for the valid matches.
template <int Dim>
void write_matches_csv(std::ostream& os, const MatchSet<Dim>& matches,
                       const std::vector<Vec<Dim>>& a_positions);

/// `x,y[,z],ux,uy[,uz]`, node order x fastest.
template <int Dim>
void write_grid_csv(std::ostream& os, const GridField<Dim>& field);

/// Writes `content` to `path`, creating parent directories. Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace serialtrack
