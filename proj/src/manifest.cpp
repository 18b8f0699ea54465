#include "sbr/manifest.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"
#include "sbr/errors.hpp"

namespace sbr {

namespace {

using Json = nlohmann::ordered_json;

struct DigestDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("SHA-256 init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("SHA-256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw std::runtime_error("SHA-256 final failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return out.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, DigestDeleter> ctx_;
};

Json files_to_json(const std::vector<HashedFile>& files) {
  Json a = Json::array();
  for (const auto& f : files) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return a;
}

std::vector<HashedFile> files_from_json(const Json& a) {
  std::vector<HashedFile> out;
  for (const auto& f : a) out.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
  return out;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (const auto n = in.gcount(); n > 0) h.update(buf.data(), static_cast<std::size_t>(n));
  }
  return h.hex();
}

std::string sha256_text(const std::string& text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.hex();
}

std::string StageManifest::fingerprint() const {
  Json j = {{"stage", stage}, {"seed", seed}, {"version", version}, {"settings", settings_sha256},
            {"inputs", files_to_json(inputs)}};
  return sha256_text(j.dump());
}

void write_manifest(const std::filesystem::path& path, const StageManifest& m) {
  Json j = {{"stage", m.stage},
            {"seed", m.seed},
            {"version", m.version},
            {"settings_sha256", m.settings_sha256},
            {"fingerprint", m.fingerprint()},
            {"inputs", files_to_json(m.inputs)},
            {"outputs", files_to_json(m.outputs)}};
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::optional<StageManifest> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const auto j = Json::parse(in);
    StageManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.settings_sha256 = j.at("settings_sha256").get<std::string>();
    m.inputs = files_from_json(j.at("inputs"));
    m.outputs = files_from_json(j.at("outputs"));
    return m;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // unreadable manifest: treat the stage as never run
  }
}

bool manifest_current(const StageManifest& recorded, const StageManifest& expected, const std::filesystem::path& root) {
  if (recorded.fingerprint() != expected.fingerprint()) return false;
  for (const auto& f : recorded.outputs) {
    const auto p = root / f.path;
    if (!std::filesystem::exists(p) || sha256_file(p) != f.sha256) return false;
  }
  return true;
}

}  // namespace sbr
