#include "aif/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aif {

namespace {

// x86 is little-endian; serialize through memcpy to keep the layout explicit.

void put_u16(std::string& buf, std::uint16_t v) {
  char b[2];
  std::memcpy(b, &v, 2);
  buf.append(b, 2);
}

void put_u32(std::string& buf, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::filesystem::path& file;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint '" + file.string() + "': " + what + " at byte offset " +
                             std::to_string(pos));
  }

  void need(std::size_t n) const {
    if (pos + n > buf.size()) fail("truncated file (need " + std::to_string(n) + " more bytes)");
  }

  template <class U>
  U take() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf.data() + pos, sizeof(U));
    pos += sizeof(U);
    return v;
  }

  std::string take_str(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file) {
  std::string buf;
  buf.append("AIFW", 4);
  put_u32(buf, 1);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& p : ckpt.tensors) {
    check(p.name.size() <= 0xffff, "checkpoint: tensor name too long: " + p.name);
    put_u16(buf, static_cast<std::uint16_t>(p.name.size()));
    buf.append(p.name);
    const auto& shape = p.value.shape();
    check(shape.size() <= 0xff, "checkpoint: tensor rank too large: " + p.name);
    buf.push_back(static_cast<char>(shape.size()));
    for (int d : shape) put_u32(buf, static_cast<std::uint32_t>(d));
    buf.push_back('\0');  // dtype 0 = f32
    const auto& data = p.value.data();
    const std::size_t n = buf.size();
    buf.resize(n + data.size() * sizeof(float));
    std::memcpy(buf.data() + n, data.data(), data.size() * sizeof(float));
  }
  const std::string json = ckpt.config.to_json();
  put_u32(buf, static_cast<std::uint32_t>(json.size()));
  buf.append(json);

  std::ofstream os(file, std::ios::binary);
  check(os.good(), "checkpoint: cannot open '" + file.string() + "' for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  check(os.good(), "checkpoint: write failed for '" + file.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is.good()) throw std::runtime_error("checkpoint '" + file.string() + "': cannot open for reading");
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r{buf, 0, file};

  if (r.take_str(4) != "AIFW") {
    r.pos = 0;
    r.fail("bad magic (expected 'AIFW')");
  }
  const auto version = r.take<std::uint32_t>();
  if (version != 1) {
    r.pos -= 4;
    r.fail("unsupported version " + std::to_string(version));
  }
  const auto count = r.take<std::uint32_t>();

  Checkpoint ckpt;
  ckpt.tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.take<std::uint16_t>();
    std::string name = r.take_str(name_len);
    const auto rank = r.take<std::uint8_t>();
    Shape shape(rank);
    std::int64_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.take<std::uint32_t>());
      if (d <= 0) r.fail("invalid dimension in tensor '" + name + "'");
      numel *= d;
    }
    const auto dtype = r.take<std::uint8_t>();
    if (dtype != 0) {
      r.pos -= 1;
      r.fail("unsupported dtype " + std::to_string(dtype) + " in tensor '" + name + "'");
    }
    r.need(static_cast<std::size_t>(numel) * sizeof(float));
    std::vector<float> data(static_cast<std::size_t>(numel));
    std::memcpy(data.data(), buf.data() + r.pos, data.size() * sizeof(float));
    r.pos += data.size() * sizeof(float);
    ckpt.tensors.push_back({std::move(name), TensorF(std::move(shape), std::move(data))});
  }

  const auto json_len = r.take<std::uint32_t>();
  const std::string json = r.take_str(json_len);
  if (r.pos != buf.size()) r.fail("trailing bytes after config");
  ckpt.config = AdaptConfig::from_json(json);
  return ckpt;
}

}  // namespace aif
