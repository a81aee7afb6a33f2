#include "tnfdt/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tnfdt::io {

static_assert(std::endian::native == std::endian::little, "blob encoding assumes a little-endian host");

namespace {

template <typename T>
constexpr char precision_tag() {
  return sizeof(T) == 4 ? 'f' : 'd';
}

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

void put_string(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename U>
  U get(const char* field) {
    need(sizeof(U), field);
    U value;
    std::memcpy(&value, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }

  std::string_view bytes(std::size_t n, const char* field) {
    need(n, field);
    const auto view = data_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::string string(const char* field) {
    const auto n = get<std::uint32_t>(field);
    return std::string(bytes(n, field));
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const char* field) const {
    if (data_.size() - pos_ < n) throw FormatError(field, "blob truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::string encode_model(nn::Model<T>& model) {
  std::string out(kModelMagic);
  put<std::uint32_t>(out, kModelVersion);
  put<char>(out, precision_tag<T>());
  put_string(out, model.spec().serialize());
  const auto state = model.state();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.size()));
  for (const auto& s : state) {
    put_string(out, s.name);
    const Shape& shape = s.value->shape();
    for (std::size_t d : {shape.n(), shape.z(), shape.y(), shape.x()}) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(s.value->data()), s.value->size() * sizeof(T));
  }
  return out;
}

template <typename T>
nn::Model<T> decode_model(std::string_view blob) {
  Reader in(blob);
  if (in.bytes(kModelMagic.size(), "magic") != kModelMagic) throw FormatError("magic", "not a model blob");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kModelVersion) {
    throw ArtifactMismatch("version", "blob version " + std::to_string(version) + ", expected " +
                                          std::to_string(kModelVersion));
  }
  const char tag = in.get<char>("precision");
  if (tag != precision_tag<T>()) {
    throw ArtifactMismatch("precision", std::string("blob precision '") + tag + "', expected '" +
                                            precision_tag<T>() + "'");
  }
  const nn::ModelSpec spec = nn::ModelSpec::parse(in.string("model spec"));
  Rng rng(0);
  nn::Model<T> model = nn::build_model<T>(spec, rng);
  const auto state = model.state();
  const auto count = in.get<std::uint32_t>("tensor count");
  if (count != state.size()) {
    throw FormatError("tensor count", std::to_string(count) + " tensors, model expects " +
                                          std::to_string(state.size()));
  }
  for (const auto& s : state) {
    const std::string name = in.string("tensor name");
    if (name != s.name) throw FormatError("tensor name", "found '" + name + "', expected '" + s.name + "'");
    std::uint64_t dims[4];
    for (auto& d : dims) d = in.get<std::uint64_t>("tensor shape");
    const Shape& shape = s.value->shape();
    if (dims[0] != shape.n() || dims[1] != shape.z() || dims[2] != shape.y() || dims[3] != shape.x()) {
      throw FormatError("tensor shape", name + " does not match " + shape.str());
    }
    const auto payload = in.bytes(s.value->size() * sizeof(T), "tensor payload");
    std::memcpy(s.value->data(), payload.data(), payload.size());
  }
  if (!in.done()) throw FormatError("trailer", "unexpected bytes after the last tensor");
  return model;
}

template <typename T>
void save_model(nn::Model<T>& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(model));
}

template <typename T>
nn::Model<T> load_model(const std::filesystem::path& path) {
  return decode_model<T>(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

template std::string encode_model<float>(nn::Model<float>&);
template std::string encode_model<double>(nn::Model<double>&);
template nn::Model<float> decode_model<float>(std::string_view);
template nn::Model<double> decode_model<double>(std::string_view);
template void save_model<float>(nn::Model<float>&, const std::filesystem::path&);
template void save_model<double>(nn::Model<double>&, const std::filesystem::path&);
template nn::Model<float> load_model<float>(const std::filesystem::path&);
template nn::Model<double> load_model<double>(const std::filesystem::path&);

}  // namespace tnfdt::io
