#include "svt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "svt/errors.hpp"
#include "svt/random.hpp"

namespace svt::io {

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw IoError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> d{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        d[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw IoError("base64 padding in the middle of a quantum");
        d[k] = decode_char(c);
        if (d[k] < 0) throw IoError(std::string("invalid base64 character '") + c + "'");
      }
    }
    const std::uint32_t v = (d[0] << 18) | (d[1] << 12) | (d[2] << 6) | d[3];
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string encode_doubles(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes);
}

std::vector<double> decode_doubles(std::string_view text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % 8 != 0) throw IoError("encoded double array has a truncated element");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

json matrix_to_json(const nn::Mat& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", encode_doubles({m.data(), static_cast<std::size_t>(m.size())})}};
}

nn::Mat matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = decode_doubles(j.at("data").get<std::string>());
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw IoError("matrix payload does not match its declared shape");
  }
  nn::Mat m(rows, cols);
  std::memcpy(m.data(), data.data(), data.size() * sizeof(double));
  return m;
}

json meta_to_json(const CheckpointMeta& meta) {
  return {{"seed", meta.seed}, {"train_step", meta.train_step},
          {"env_config_hash", meta.env_config_hash}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.train_step = j.value("train_step", 0L);
  meta.env_config_hash = j.value("env_config_hash", std::string{});
  return meta;
}

json mlp_to_json(const nn::Mlp& net) {
  json activations = json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    activations.push_back(l + 1 < net.num_layers() ? "relu" : "identity");
  }
  json params = json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    params.push_back(matrix_to_json(net.weight(l)));
    params.push_back(matrix_to_json(net.bias(l)));
  }
  return {{"layer_sizes", net.layer_sizes()}, {"activations", activations}, {"parameters", params}};
}

nn::Mlp mlp_from_json(const json& j) {
  nn::Mlp net(j.at("layer_sizes").get<std::vector<int>>());
  const auto& params = j.at("parameters");
  auto slots = net.parameters();
  if (params.size() != slots.size()) throw IoError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    nn::Mat m = matrix_from_json(params[i]);
    if (m.rows() != slots[i]->rows() || m.cols() != slots[i]->cols()) {
      throw IoError("checkpoint parameter " + std::to_string(i) + " has the wrong shape");
    }
    *slots[i] = std::move(m);
  }
  return net;
}

json mlp_checkpoint(const nn::Mlp& net, const CheckpointMeta& meta) {
  return {{"format", kCheckpointFormat}, {"kind", "mlp"}, {"network", mlp_to_json(net)},
          {"metadata", meta_to_json(meta)}};
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 15];
  return s;
}

std::string content_hash(const nn::Mlp& net) { return hex64(fnv1a64(mlp_to_json(net).dump())); }

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace svt::io
