#include "avatarforge/binio.hpp"

#include "avatarforge/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

namespace avatarforge {

namespace {

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void string(const std::string& s) {
    pod(static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(v.data());
    out.insert(out.end(), p, p + v.size() * sizeof(T));
  }
  std::vector<uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string string() {
    const auto n = pod<uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> array(uint64_t count) {
    if (count > (bytes_.size() - pos_) / sizeof(T)) throw InputError("malformed section: truncated payload");
    std::vector<T> v(count);
    std::memcpy(v.data(), bytes_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw InputError("malformed section: unexpected end of file");
  }
  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
};

}  // namespace

uint64_t Tensor::element_count() const {
  uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<double> Tensor::as_f64() const {
  if (const auto* f = std::get_if<std::vector<float>>(&data)) return {f->begin(), f->end()};
  if (const auto* d = std::get_if<std::vector<double>>(&data)) return *d;
  throw InputError("malformed section '" + name + "': expected floating-point data");
}

std::vector<uint32_t> Tensor::as_u32() const {
  if (const auto* u = std::get_if<std::vector<uint32_t>>(&data)) return *u;
  throw InputError("malformed section '" + name + "': expected u32 data");
}

const Tensor* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const Tensor& TensorFile::get(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw InputError("malformed section: missing '" + name + "'");
}

std::vector<uint8_t> serialize_tensor_file(const TensorFile& file) {
  if (file.magic.size() != 4) throw Error("container magic must be 4 bytes");
  Writer w;
  w.out.insert(w.out.end(), file.magic.begin(), file.magic.end());
  w.pod(file.version);
  w.string(file.metadata);
  w.pod(static_cast<uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    w.string(t.name);
    w.pod(static_cast<uint8_t>(t.dtype()));
    w.pod(static_cast<uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.pod(d);
    std::visit(
        [&](const auto& v) {
          if (v.size() != t.element_count()) throw Error("tensor '" + t.name + "' size does not match its shape");
          w.array(v);
        },
        t.data);
  }
  return std::move(w.out);
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  const auto bytes = serialize_tensor_file(file);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("write failed: " + path.string());
}

TensorFile parse_tensor_file(const std::vector<uint8_t>& bytes, const std::string& expected_magic) {
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != expected_magic)
    throw InputError("malformed section: bad magic, expected '" + expected_magic + "'");
  std::vector<uint8_t> body(bytes.begin() + 4, bytes.end());
  Reader r(body);
  TensorFile file;
  file.magic = expected_magic;
  file.version = r.pod<uint32_t>();
  file.metadata = r.string();
  const auto count = r.pod<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.string();
    const auto dtype = r.pod<uint8_t>();
    const auto ndim = r.pod<uint32_t>();
    if (ndim > 8) throw InputError("malformed section '" + t.name + "': too many dimensions");
    for (uint32_t d = 0; d < ndim; ++d) t.shape.push_back(r.pod<uint64_t>());
    const auto n = t.element_count();
    switch (static_cast<DType>(dtype)) {
      case DType::kF32: t.data = r.array<float>(n); break;
      case DType::kU32: t.data = r.array<uint32_t>(n); break;
      case DType::kF64: t.data = r.array<double>(n); break;
      default: throw InputError("malformed section '" + t.name + "': unknown dtype");
    }
    file.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw InputError("malformed section: trailing bytes");
  return file;
}

TensorFile read_tensor_file(const std::filesystem::path& path, const std::string& expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("file not found: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_tensor_file(bytes, expected_magic);
}

}  // namespace avatarforge
