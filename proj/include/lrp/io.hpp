#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrp/detection.hpp"
#include "lrp/model.hpp"

namespace lrp {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 = PGM, 3 = PPM
  std::vector<std::uint8_t> pixels;  // row-major, interleaved channels
};

namespace detail {

inline int pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments between header fields.
  int c;
  while ((c = in.peek()) != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value;
  if (!(in >> value)) throw std::runtime_error("truncated PNM header");
  return value;
}

}  // namespace detail

// Binary PGM (P5) / PPM (P6), 8-bit only.
inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  in >> magic;
  Image img;
  if (magic == "P5")
    img.channels = 1;
  else if (magic == "P6")
    img.channels = 3;
  else
    throw std::runtime_error(path + ": unsupported PNM magic " + magic);
  img.width = detail::pnm_token(in);
  img.height = detail::pnm_token(in);
  const int maxval = detail::pnm_token(in);
  if (maxval != 255)
    throw std::runtime_error(path + ": only 8-bit PNM supported");
  in.get();  // single whitespace after maxval
  const size_t count =
      static_cast<size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(count);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(count));
  if (static_cast<size_t>(in.gcount()) != count)
    throw std::runtime_error(path + ": truncated pixel data");
  return img;
}

inline void write_pnm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline FrameVector image_to_frame(const Image& img) {
  FrameVector f;
  f.n = img.channels;
  f.N = img.width * img.height;
  f.x.resize(static_cast<Eigen::Index>(f.n) * f.N);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    f.x(static_cast<Eigen::Index>(i)) = static_cast<double>(img.pixels[i]);
  return f;
}

inline Image frame_to_image(const FrameVector& f, int height, int width) {
  if (height * width != f.N)
    throw std::invalid_argument("frame_to_image: grid does not match frame");
  Image img;
  img.width = width;
  img.height = height;
  img.channels = f.n;
  img.pixels.resize(static_cast<size_t>(f.dim()));
  for (int i = 0; i < f.dim(); ++i) {
    const double v = std::round(f.x(i));
    img.pixels[static_cast<size_t>(i)] =
        static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

// Event masks as PGM: 0 = background/consistent, 255 = event.
inline void write_mask_pnm(const std::string& path, const EventMask& mask,
                           int height, int width) {
  if (height * width != mask.size())
    throw std::invalid_argument("mask grid mismatch");
  Image img;
  img.width = width;
  img.height = height;
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(mask.size()));
  for (int i = 0; i < mask.size(); ++i)
    img.pixels[static_cast<size_t>(i)] = mask.y(i) ? 0 : 255;
  write_pnm(path, img);
}

inline EventMask read_mask_pnm(const std::string& path) {
  const Image img = read_pnm(path);
  if (img.channels != 1)
    throw std::runtime_error(path + ": mask must be single-channel");
  EventMask m;
  m.y = BoolRow::Constant(img.width * img.height, true);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    m.y(static_cast<Eigen::Index>(i)) = img.pixels[i] < 128;
  return m;
}

// CSV matrix: one frame per row; all rows must share a width.
inline std::vector<FrameVector> read_csv_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<FrameVector> frames;
  std::string line;
  Eigen::Index width = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": bad CSV value '" + cell + "'");
      }
    }
    if (vals.empty()) continue;
    if (width < 0)
      width = static_cast<Eigen::Index>(vals.size());
    else if (width != static_cast<Eigen::Index>(vals.size()))
      throw std::runtime_error(path + ": inconsistent CSV row width");
    FrameVector f;
    f.n = 1;
    f.N = static_cast<int>(vals.size());
    f.x = Eigen::Map<RowVector>(vals.data(), width);
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw std::runtime_error(path + ": no frames");
  return frames;
}

// Factor dump: header "LRP1 T r nN" then L and R row-major as
// little-endian 64-bit floats.
inline void write_factors(const std::string& path, const FactorPair& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "LRP1 " << f.rows() << " " << f.rank() << " " << f.cols() << "\n";
  auto dump = [&out](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  };
  dump(f.L);
  dump(f.R);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline FactorPair read_factors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int rows, rank, cols;
  if (!(in >> magic >> rows >> rank >> cols) || magic != "LRP1")
    throw std::runtime_error(path + ": not a LRP1 factor dump");
  in.get();  // newline
  FactorPair f(rows, rank, cols);
  auto load = [&in, &path](Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw std::runtime_error(path + ": truncated factor dump");
        m(i, j) = v;
      }
  };
  load(f.L);
  load(f.R);
  f.resync_cache();
  return f;
}

inline void write_histogram_csv(const std::string& path,
                                const ThresholdHistogram& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "bin,count\n";
  for (size_t b = 0; b < h.bins.size(); ++b)
    out << b << "," << h.bins[b] << "\n";
}

// Sorted list of the PGM/PPM files in a directory.
inline std::vector<std::string> list_pnm_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (!fs::is_directory(dir))
    throw std::runtime_error(dir + ": not a directory");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace lrp
