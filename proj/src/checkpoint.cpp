#include "fcm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fcm/errors.hpp"
#include "json.hpp"

namespace fcm {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::string_view kMagic = "FCMCKPT1";

void append_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

void append_tensor(std::string& out, const Tensor& t) {
  out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
}

}  // namespace

std::string serialize(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = to_text(ckpt.config);
  header["vocab"] = std::vector<std::string>(ckpt.vocab.learned_tokens().begin(), ckpt.vocab.learned_tokens().end());
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& p : ckpt.params) dir.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  header["tensors"] = dir;
  header["has_moments"] = !ckpt.optimizer.first.empty();
  header["optimizer_step"] = ckpt.optimizer.step;
  header["epoch"] = ckpt.epoch;
  header["rng_state"] = ckpt.rng_state;
  const std::string head = header.dump();

  std::string out(kMagic);
  append_u64(out, head.size());
  out += head;
  for (const auto& p : ckpt.params) append_tensor(out, p.value);
  if (!ckpt.optimizer.first.empty()) {
    if (ckpt.optimizer.first.size() != ckpt.params.size() || ckpt.optimizer.second.size() != ckpt.params.size()) {
      throw std::logic_error("checkpoint: optimizer moments do not match parameters");
    }
    for (const auto& t : ckpt.optimizer.first) append_tensor(out, t);
    for (const auto& t : ckpt.optimizer.second) append_tensor(out, t);
  }
  return out;
}

Checkpoint deserialize(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, 8) != kMagic) throw DataError("not an FCM checkpoint");
  std::uint64_t head_len = 0;
  std::memcpy(&head_len, bytes.data() + 8, 8);
  if (bytes.size() < 16 + head_len) throw DataError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = parse_config(header.at("config").get<std::string>());
    const auto tokens = header.at("vocab").get<std::vector<std::string>>();
    ckpt.vocab = corpus::Vocabulary(tokens);
    ckpt.optimizer.step = header.at("optimizer_step").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<std::uint64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  std::size_t offset = 16 + head_len;
  auto read_tensor = [&](const Shape& shape) {
    Tensor t(shape);
    const std::size_t nbytes = t.size() * sizeof(double);
    if (bytes.size() < offset + nbytes) throw DataError("truncated checkpoint data");
    std::memcpy(t.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
    return t;
  };
  std::vector<Shape> shapes;
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<Shape>();
    shapes.push_back(shape);
    ckpt.params.add(entry.at("name").get<std::string>(), read_tensor(shape));
  }
  if (header.at("has_moments").get<bool>()) {
    for (const auto& s : shapes) ckpt.optimizer.first.push_back(read_tensor(s));
    for (const auto& s : shapes) ckpt.optimizer.second.push_back(read_tensor(s));
  }
  if (offset != bytes.size()) throw DataError("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace fcm
