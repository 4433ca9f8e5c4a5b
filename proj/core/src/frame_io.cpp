#include "rdpv/frame_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rdpv::io {

namespace {

int next_pnm_token(std::istream& is) {
  // skips whitespace and '#' comments, then reads one non-negative integer
  int c = is.get();
  while (is) {
    if (c == '#') {
      while (is && c != '\n') c = is.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = is.get();
  }
  if (!is) throw std::runtime_error("pgm: truncated header");
  int value = 0;
  bool any = false;
  while (is && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) throw std::runtime_error("pgm: malformed header");
  return value;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path, int* bit_depth) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pgm: cannot open " + path.string());
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '5') {
    throw std::runtime_error("pgm: " + path.string() + " is not binary PGM (P5)");
  }
  const int width = next_pnm_token(is);
  const int height = next_pnm_token(is);
  const int maxval = next_pnm_token(is);
  if (maxval != 255 && maxval != 65535) {
    throw std::runtime_error("pgm: unsupported bit depth (maxval " +
                             std::to_string(maxval) + ") in " + path.string());
  }
  Image img(height, width);
  const std::size_t n = img.size();
  if (maxval == 255) {
    std::vector<std::uint8_t> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("pgm: truncated pixel data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) img.data()[i] = buf[i] / 255.0;
    if (bit_depth != nullptr) *bit_depth = 8;
  } else {
    std::vector<std::uint8_t> buf(2 * n);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(2 * n));
    if (!is) throw std::runtime_error("pgm: truncated pixel data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
      img.data()[i] = v / 65535.0;
    }
    if (bit_depth != nullptr) *bit_depth = 16;
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw std::invalid_argument("pgm: bit depth must be 8 or 16");
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("pgm: cannot open " + path.string());
  const int maxval = bit_depth == 8 ? 255 : 65535;
  os << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  const std::size_t n = img.size();
  if (bit_depth == 8) {
    std::vector<std::uint8_t> buf(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::clamp(img.data()[i], 0.0, 1.0);
      buf[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(n));
  } else {
    std::vector<std::uint8_t> buf(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::clamp(img.data()[i], 0.0, 1.0);
      const unsigned q = static_cast<unsigned>(std::lround(v * 65535.0));
      buf[2 * i] = static_cast<std::uint8_t>(q >> 8);
      buf[2 * i + 1] = static_cast<std::uint8_t>(q & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(2 * n));
  }
  if (!os) throw std::runtime_error("pgm: write failed for " + path.string());
}

namespace {

bool wildcard_match(const std::string& pattern, const std::string& name) {
  // single '*' wildcard is all we need for frame patterns
  const auto star = pattern.find('*');
  if (star == std::string::npos) return pattern == name;
  const std::string prefix = pattern.substr(0, star);
  const std::string suffix = pattern.substr(star + 1);
  return name.size() >= prefix.size() + suffix.size() &&
         name.compare(0, prefix.size(), prefix) == 0 &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

long long numeric_suffix(const std::string& stem) {
  // value of the trailing digit run, -1 when absent
  auto it = stem.end();
  while (it != stem.begin() && std::isdigit(static_cast<unsigned char>(*(it - 1)))) {
    --it;
  }
  if (it == stem.end()) return -1;
  long long v = 0;
  std::from_chars(&*it, stem.data() + stem.size(), v);
  return v;
}

}  // namespace

FrameSequence load_frames(const std::filesystem::path& dir,
                          const std::string& pattern) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("load_frames: " + dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (wildcard_match(pattern, entry.path().filename().string())) {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) {
    throw std::runtime_error("load_frames: no files matching " + pattern + " in " +
                             dir.string());
  }
  std::sort(files.begin(), files.end(),
            [](const std::filesystem::path& a, const std::filesystem::path& b) {
              const long long na = numeric_suffix(a.stem().string());
              const long long nb = numeric_suffix(b.stem().string());
              if (na != nb) return na < nb;
              return a.filename().string() < b.filename().string();
            });

  FrameSequence seq;
  int depth = 0;
  for (const auto& f : files) {
    int d = 0;
    Image img = read_pgm(f, &d);
    if (seq.frames.empty()) {
      depth = d;
    } else {
      if (!img.same_shape(seq.frames.front())) {
        throw std::runtime_error("load_frames: mixed frame shapes in " + dir.string());
      }
      if (d != depth) {
        throw std::runtime_error("load_frames: mixed bit depths in " + dir.string());
      }
    }
    seq.frames.push_back(std::move(img));
  }
  seq.source_bit_depth = depth;
  return seq;
}

void save_frames(const std::filesystem::path& dir, const FrameSequence& frames,
                 const std::string& prefix) {
  frames.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%04zu", i);
    write_pgm(dir / (prefix + idx + ".pgm"), frames.frames[i],
              frames.source_bit_depth);
  }
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const std::vector<Trajectory>& tracks) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("csv: cannot open " + path.string());
  os << "track_id,frame,x,y,radius\n";
  char line[160];
  for (const Trajectory& t : tracks) {
    for (const TrackSample& s : t.samples) {
      std::snprintf(line, sizeof(line), "%d,%d,%.6f,%.6f,%.6f\n", t.track_id,
                    s.frame, s.x, s.y, t.radius);
      os << line;
    }
  }
  if (!os) throw std::runtime_error("csv: write failed for " + path.string());
}

std::vector<Trajectory> read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("csv: empty file " + path.string());
  }
  std::map<int, Trajectory> by_id;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    double vals[5];
    for (int i = 0; i < 5; ++i) {
      if (!std::getline(ls, field, i == 4 ? '\n' : ',')) {
        throw std::runtime_error("csv: malformed row in " + path.string());
      }
      vals[i] = std::stod(field);
    }
    const int id = static_cast<int>(vals[0]);
    Trajectory& t = by_id[id];
    t.track_id = id;
    t.radius = vals[4];
    t.samples.push_back({static_cast<int>(vals[1]), vals[2], vals[3]});
  }
  std::vector<Trajectory> out;
  out.reserve(by_id.size());
  for (auto& [id, t] : by_id) {
    std::sort(t.samples.begin(), t.samples.end(),
              [](const TrackSample& a, const TrackSample& b) {
                return a.frame < b.frame;
              });
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace rdpv::io
