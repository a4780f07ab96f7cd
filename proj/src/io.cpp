#include "mlrg/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mlrg/errors.hpp"

namespace mlrg::io {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_count(std::string_view text, long long& out) {
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

void write_samples(std::ostream& os, const SampleFile& file) {
  os << "ISING-SAMPLES v1 L=" << file.side << " N=" << file.samples.size() << '\n';
  std::string line;
  for (const SpinLattice& lat : file.samples) {
    if (lat.side() != file.side) throw ConfigError("sample side does not match the file side");
    line.clear();
    for (Spin s : lat.spins()) line.push_back(s > 0 ? '+' : '-');
    line.push_back('\n');
    os << line;
  }
  if (!os) throw IoError("failed to write sample file");
}

SampleFile read_samples(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw IoError("sample file is empty");
  constexpr std::string_view magic = "ISING-SAMPLES v1 L=";
  if (header.rfind(magic, 0) != 0) throw IoError("sample file header must start with '" + std::string(magic) + "'");
  const std::string_view rest = std::string_view(header).substr(magic.size());
  const auto space = rest.find(" N=");
  long long side = 0;
  long long count = 0;
  if (space == std::string_view::npos || !parse_count(rest.substr(0, space), side) ||
      !parse_count(rest.substr(space + 3), count)) {
    throw IoError("malformed sample file header: '" + header + "'");
  }
  if (side < SpinLattice::kMinSide || side > 4096) throw IoError("sample file side out of range: " + std::to_string(side));
  if (count < 1) throw IoError("sample file must hold at least one sample");

  SampleFile file;
  file.side = static_cast<int>(side);
  const auto sites = static_cast<std::size_t>(side * side);
  std::string line;
  std::vector<Spin> spins(sites);
  for (long long n = 0; n < count; ++n) {
    if (!std::getline(is, line)) {
      throw IoError("sample file ends after " + std::to_string(n) + " of " + std::to_string(count) + " samples");
    }
    if (line.size() != sites) {
      throw IoError("sample " + std::to_string(n + 1) + " has " + std::to_string(line.size()) + " characters, expected " +
                    std::to_string(sites));
    }
    for (std::size_t i = 0; i < sites; ++i) {
      if (line[i] == '+') {
        spins[i] = 1;
      } else if (line[i] == '-') {
        spins[i] = -1;
      } else {
        throw IoError("sample " + std::to_string(n + 1) + " contains a character other than '+' or '-'");
      }
    }
    file.samples.emplace_back(file.side, spins);
  }
  if (std::getline(is, line)) throw IoError("sample file holds more lines than its header declares");
  return file;
}

void save_samples(const std::string& path, const SampleFile& file) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_samples(os, file);
  os.flush();
  if (!os) throw IoError("failed to write '" + path + "'");
}

SampleFile load_samples(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open sample file '" + path + "'");
  return read_samples(is);
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> load_key_values(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string format_vector(const Vector8& v) {
  std::string out;
  for (int k = 0; k < v.size(); ++k) {
    if (k) out.push_back(',');
    out += format_double(v(k));
  }
  return out;
}

Vector8 parse_vector(std::string_view text) {
  Vector8 v;
  int k = 0;
  while (true) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    if (k >= kNumPotentials) throw ConfigError("expected 8 comma-separated values");
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("'" + std::string(item) + "' is not a number");
    }
    v(k++) = x;
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  if (k != kNumPotentials) throw ConfigError("expected 8 comma-separated values, got " + std::to_string(k));
  return v;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back().push_back(c);
    }
  }
  return fields;
}

void CsvWriter::comment(std::string_view text) { os_ << "# " << text << '\n'; }

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os_ << ',';
    os_ << csv_escape(fields[i]);
  }
  os_ << '\n';
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  os.flush();
  if (!os) throw IoError("failed to write '" + path + "'");
}

}  // namespace mlrg::io
