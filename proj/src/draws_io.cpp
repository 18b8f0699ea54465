#include "sbr/draws_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "sbr/errors.hpp"

namespace sbr {

static_assert(std::endian::native == std::endian::little, "draws files are written in native little-endian order");

namespace {

constexpr char kMagic[8] = {'S', 'B', 'R', 'D', 'R', 'A', 'W', 'S'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw IoError("truncated draws file: " + path_.string());
    return value;
  }
  std::string text(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated draws file: " + path_.string());
    return s;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void write_draws(const std::filesystem::path& path, const PosteriorDraws& draws) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kVersion);
  const auto chains = static_cast<std::uint32_t>(draws.n_chains());
  const auto kept = static_cast<std::uint32_t>(draws.n_kept());
  const auto dim = static_cast<std::uint32_t>(draws.dim());
  w.put(chains);
  w.put(kept);
  w.put(dim);
  for (const auto& name : draws.names) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
  }
  for (std::uint32_t p = 0; p < dim; ++p) {
    for (std::uint32_t c = 0; c < chains; ++c) {
      for (std::uint32_t i = 0; i < kept; ++i) w.put<double>(draws.chains[c](i, p));
    }
  }
  for (std::uint32_t c = 0; c < chains; ++c) {
    w.put<double>(c < draws.step_size.size() ? draws.step_size[c] : 0.0);
    const Eigen::VectorXd metric = c < draws.inverse_metric.size() ? draws.inverse_metric[c] : Eigen::VectorXd();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(metric.size()));
    for (Eigen::Index k = 0; k < metric.size(); ++k) w.put<double>(metric(k));
  }
  for (std::uint32_t c = 0; c < chains; ++c) {
    for (std::uint32_t i = 0; i < kept; ++i) {
      const auto& s = draws.stats[c][i];
      w.put<double>(s.step_size);
      w.put<std::int32_t>(s.tree_depth);
      w.put<std::int32_t>(s.n_leapfrog);
      w.put<std::uint8_t>(s.divergent ? 1 : 0);
      w.put<double>(s.accept_stat);
      w.put<double>(s.log_density);
      w.put<double>(s.energy);
    }
  }
  w.finish(path);
}

PosteriorDraws read_draws(const std::filesystem::path& path) {
  Reader r(path);
  if (r.text(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw IoError("not a draws file: " + path.string());
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw IoError("unsupported draws file version " + std::to_string(v) + ": " + path.string());
  }
  const auto chains = r.get<std::uint32_t>();
  const auto kept = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();

  PosteriorDraws d;
  for (std::uint32_t p = 0; p < dim; ++p) d.names.push_back(r.text(r.get<std::uint32_t>()));
  d.chains.assign(chains, Eigen::MatrixXd(kept, dim));
  for (std::uint32_t p = 0; p < dim; ++p) {
    for (std::uint32_t c = 0; c < chains; ++c) {
      for (std::uint32_t i = 0; i < kept; ++i) d.chains[c](i, p) = r.get<double>();
    }
  }
  for (std::uint32_t c = 0; c < chains; ++c) {
    d.step_size.push_back(r.get<double>());
    Eigen::VectorXd metric(r.get<std::uint32_t>());
    for (Eigen::Index k = 0; k < metric.size(); ++k) metric(k) = r.get<double>();
    d.inverse_metric.push_back(std::move(metric));
  }
  d.stats.assign(chains, std::vector<IterationStats>(kept));
  for (std::uint32_t c = 0; c < chains; ++c) {
    for (std::uint32_t i = 0; i < kept; ++i) {
      auto& s = d.stats[c][i];
      s.step_size = r.get<double>();
      s.tree_depth = r.get<std::int32_t>();
      s.n_leapfrog = r.get<std::int32_t>();
      s.divergent = r.get<std::uint8_t>() != 0;
      s.accept_stat = r.get<double>();
      s.log_density = r.get<double>();
      s.energy = r.get<double>();
    }
  }
  return d;
}

}  // namespace sbr
