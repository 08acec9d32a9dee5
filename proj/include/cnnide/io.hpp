#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cnnide/enkf.hpp"
#include "cnnide/likelihood.hpp"

namespace cnnide {

std::string read_file(const std::string& path);
/// Creates missing parent directories.
void write_file(const std::string& path, std::string_view bytes);

// ---- frame sequences ------------------------------------------------------

/// Little-endian: "IDEQ", u32 version, u32 n, u32 T, u32 scalar bits (32 or 64),
/// u32 flags (bit 0: row-major), then T n^2 scalars, then T (mean, sd) f64 pairs.
struct SequenceData {
  GridSpec grid;
  std::vector<Field> frames;
  std::vector<StandardizationRecord> records;  // one per frame
  int scalar_bits = 32;
};

inline constexpr std::size_t kSequenceHeaderBytes = 24;

std::string encode_sequence(const SequenceData& data);
SequenceData decode_sequence(std::string_view bytes, const std::string& source = "<memory>");
void write_sequence(const std::string& path, const SequenceData& data);
SequenceData read_sequence(const std::string& path);

/// Identity records (mean 0, sd 1) for frames that are already in model units.
SequenceData plain_sequence(const std::vector<Field>& frames, int scalar_bits = 32);

// ---- observations ---------------------------------------------------------

/// Columns t,pixel_row,pixel_col,value.
std::string observations_csv(const std::vector<Observations>& obs, const GridSpec& grid);
/// Groups rows by t (ascending); sigma2_eps is not stored in the file.
std::vector<Observations> parse_observations_csv(std::string_view text, const GridSpec& grid, double sigma2_eps,
                                                 const std::string& source = "<memory>");

// ---- checkpoints ----------------------------------------------------------

struct Checkpoint {
  CnnParams params;
  int grid_n = 16;
  double bandwidth = 0.0;
  double theta_min = kThetaMin;
  NoiseParams noise;
  bool noise_fitted = false;
  std::string training_echo;  // key = value lines

  CnnIdeModel model() const;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");
void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// ---- filter outputs -------------------------------------------------------

/// t,forecast,pixel_row,pixel_col,mean_theta1..3,var_theta1..3,bin_00..bin_11
std::string dynamics_csv(const std::vector<DynamicsSummary>& summaries, const GridSpec& grid);

/// Writes the members (64-bit, member-major, tau frames each) to stem + ".ideq"
/// and the metadata to stem + ".json".
void write_ensemble(const std::string& stem, const Ensemble& ens);
Ensemble read_ensemble(const std::string& stem);

}  // namespace cnnide
