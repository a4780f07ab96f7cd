#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mlrg/lattice.hpp"
#include "mlrg/types.hpp"

namespace mlrg::io {

/// Spin configurations of one side, stored as
///
///   ISING-SAMPLES v1 L=<L> N=<N>
///   <L*L characters '+'/'-', row-major>   (N lines)
///
/// with LF line endings.
struct SampleFile {
  int side = 0;
  std::vector<SpinLattice> samples;
};

void write_samples(std::ostream& os, const SampleFile& file);
/// Throws IoError on any deviation from the format.
SampleFile read_samples(std::istream& is);

void save_samples(const std::string& path, const SampleFile& file);
SampleFile load_samples(const std::string& path);

/// Flat `key = value` text; '#' starts a comment, blank lines are skipped.
/// Throws ConfigError on malformed lines or duplicate keys.
std::map<std::string, std::string> parse_key_values(std::string_view text);
std::map<std::string, std::string> load_key_values(const std::string& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);
/// Comma-separated format_double of each entry.
std::string format_vector(const Vector8& v);
/// Parses exactly 8 comma-separated reals.
Vector8 parse_vector(std::string_view text);

/// Minimal CSV writer: LF endings, fields quoted only when needed.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  /// "# text" line; must precede the first row.
  void comment(std::string_view text);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& os_;
};

std::string csv_escape(std::string_view field);

/// Splits one CSV record (no embedded newlines) into fields.
std::vector<std::string> csv_split(std::string_view line);

/// Writes `text` to `path` (or nothing when path is empty); throws IoError.
void write_file(const std::string& path, const std::string& text);

}  // namespace mlrg::io
