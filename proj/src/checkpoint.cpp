#include "lpwn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lpwn/error.hpp"

namespace lpwn {
namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'L', 'P', 'W', 'N', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(char((v >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(p[i]) << (8 * i);
  return v;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

void put_floats(std::string& out, const std::vector<float>& v) {
  for (float x : v) put_le(out, std::bit_cast<std::uint32_t>(x));
}

std::vector<float> get_floats(const unsigned char*& p, std::size_t n) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i, p += 4) {
    v[i] = std::bit_cast<float>(get_le<std::uint32_t>(p));
  }
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const nn::WaveNet<float> net(ckpt.config.net);
  const nn::ParamLayout& layout = net.layout();
  if (ckpt.params.size() != layout.total()) {
    throw Error(ErrorCode::kShape, "checkpoint parameters do not match config");
  }
  const bool has_adam = ckpt.adam.m.size() == layout.total() &&
                        ckpt.adam.v.size() == layout.total();
  json dir = json::array();
  for (const auto& t : layout.tensors()) {
    dir.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  json header = {
      {"format", "lpwn-checkpoint"},
      {"config", to_json(ckpt.config)},
      {"config_hash", hex64(config_hash(ckpt.config))},
      {"dtype", "float32-le"},
      {"num_params", layout.total()},
      {"has_optimizer", has_adam},
      {"step", ckpt.adam.step},
      {"tensors", dir},
      {"stats", {{"mean", ckpt.stats.mean}, {"std", ckpt.stats.std}}},
      {"final_loss", ckpt.final_loss ? json(*ckpt.final_loss) : json(nullptr)},
      {"train_config", ckpt.train_config},
  };
  const std::string hs = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, hs.size());
  out += hs;
  put_floats(out, ckpt.params);
  if (has_adam) {
    put_floats(out, ckpt.adam.m);
    put_floats(out, ckpt.adam.v);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelConfig* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw Error(ErrorCode::kFormat, path.string() + ": not a checkpoint");
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 8);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kUnsupportedFormat,
                path.string() + ": checkpoint version " + std::to_string(version));
  }
  const auto hlen = get_le<std::uint64_t>(bytes.data() + 12);
  if (hlen > bytes.size() - 20) {
    throw Error(ErrorCode::kFormat, path.string() + ": truncated header");
  }
  Checkpoint ck;
  std::size_t n = 0;
  bool has_adam = false;
  try {
    const json h = json::parse(bytes.begin() + 20, bytes.begin() + 20 + long(hlen));
    ck.config = model_config_from_json(h.at("config"));
    if (h.at("config_hash").get<std::string>() != hex64(config_hash(ck.config))) {
      throw Error(ErrorCode::kConfigMismatch,
                  path.string() + ": config hash does not match stored config");
    }
    if (expected && config_hash(*expected) != config_hash(ck.config)) {
      throw Error(ErrorCode::kConfigMismatch,
                  path.string() + ": checkpoint was trained with a different config");
    }
    n = h.at("num_params").get<std::size_t>();
    has_adam = h.at("has_optimizer").get<bool>();
    ck.adam.step = h.at("step").get<std::uint64_t>();
    ck.stats.mean = h.at("stats").at("mean").get<std::vector<double>>();
    ck.stats.std = h.at("stats").at("std").get<std::vector<double>>();
    if (!h.at("final_loss").is_null()) ck.final_loss = h["final_loss"].get<double>();
    ck.train_config = h.value("train_config", json(nullptr));

    const nn::WaveNet<float> net(ck.config.net);
    const auto& tensors = net.layout().tensors();
    const json& dir = h.at("tensors");
    if (n != net.layout().total() || dir.size() != tensors.size()) {
      throw Error(ErrorCode::kConfigMismatch,
                  path.string() + ": tensor directory does not match config");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (dir[i].at("name") != tensors[i].name ||
          dir[i].at("shape").get<std::vector<std::size_t>>() != tensors[i].shape ||
          dir[i].at("offset").get<std::size_t>() != tensors[i].offset) {
        throw Error(ErrorCode::kConfigMismatch,
                    path.string() + ": tensor " + tensors[i].name + " differs");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  const std::size_t want = 20 + hlen + 4 * n * (has_adam ? 3 : 1);
  if (bytes.size() != want) {
    throw Error(ErrorCode::kFormat, path.string() + ": payload size mismatch");
  }
  const unsigned char* p = bytes.data() + 20 + hlen;
  ck.params = get_floats(p, n);
  if (has_adam) {
    ck.adam.m = get_floats(p, n);
    ck.adam.v = get_floats(p, n);
  }
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model m(ckpt.config);
  m.stats = ckpt.stats;
  m.params = ckpt.params;
  return m;
}

}  // namespace lpwn
