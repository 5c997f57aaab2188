#include "grokkit/expcli/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>

#include "grokkit/errors.hpp"
#include "grokkit/expcli/config.hpp"
#include "grokkit/util.hpp"

namespace grokkit::expcli {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename V>
  void put(V v) {
    char b[sizeof(V)];
    std::memcpy(b, &v, sizeof(V));
    bytes_.append(b, sizeof(V));
  }
  void put_bytes(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const noexcept { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename V>
  V get(const char* what) {
    V v;
    std::memcpy(&v, take(sizeof(V), what), sizeof(V));
    return v;
  }
  std::string get_bytes(std::size_t n, const char* what) { return std::string(take(n, what), n); }
  const char* take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw TruncationError("checkpoint truncated while reading " + std::string(what) + ": need " + std::to_string(n) +
                            " bytes at offset " + std::to_string(pos_) + ", file has " + std::to_string(bytes_.size()));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_checkpoint(const models::Model<T>& model, const std::filesystem::path& path) {
  const std::string spec = model_to_json(model.spec()).dump();
  Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(sizeof(T));
  w.put<std::uint64_t>(fnv1a64(spec));
  w.put<std::uint64_t>(spec.size());
  w.put_bytes(spec);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& g : model.params()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.name.size()));
    w.put_bytes(g.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>((g.trainable ? 1 : 0) | (g.decay_exempt ? 2 : 0)));
    w.put<std::uint64_t>(g.value.rows());
    w.put<std::uint64_t>(g.value.cols());
    for (T v : g.value.data()) w.put<T>(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  if (std::memcmp(r.take(sizeof(kCheckpointMagic), "magic"), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("not a checkpoint (bad magic): " + path.string());
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointContents c;
  c.real_bytes = r.get<std::uint32_t>("real width");
  if (c.real_bytes != 4 && c.real_bytes != 8) {
    throw FormatError("corrupt header: real width " + std::to_string(c.real_bytes));
  }
  const auto digest = r.get<std::uint64_t>("spec digest");
  const auto spec_len = r.get<std::uint64_t>("spec length");
  const std::string spec = r.get_bytes(spec_len, "spec");
  if (fnv1a64(spec) != digest) throw FormatError("corrupt header: spec digest mismatch");
  try {
    c.spec = model_from_json(Json::parse(spec), "checkpoint.spec");
  } catch (const Json::exception& e) {
    throw FormatError(std::string("corrupt header: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("corrupt header: ") + e.what());
  }

  const auto count = r.get<std::uint32_t>("group count");
  for (std::uint32_t k = 0; k < count; ++k) {
    StoredGroup g;
    g.name = r.get_bytes(r.get<std::uint32_t>("group name length"), "group name");
    const auto flags = r.get<std::uint8_t>("group flags");
    g.trainable = (flags & 1) != 0;
    g.decay_exempt = (flags & 2) != 0;
    const auto rows = r.get<std::uint64_t>("group rows");
    const auto cols = r.get<std::uint64_t>("group cols");
    if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) throw FormatError("corrupt group shape in " + g.name);
    const char* payload = r.take(rows * cols * c.real_bytes, "group payload");
    g.value = nd::Tensor2<double>(rows, cols);
    auto out = g.value.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (c.real_bytes == 4) {
        float f;
        std::memcpy(&f, payload + 4 * i, 4);
        out[i] = f;
      } else {
        std::memcpy(&out[i], payload + 8 * i, 8);
      }
    }
    c.groups.push_back(std::move(g));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last group");
  return c;
}

template <typename T>
std::unique_ptr<models::Model<T>> load_checkpoint(const std::filesystem::path& path) {
  auto c = read_checkpoint(path);
  if (c.real_bytes != sizeof(T)) {
    throw FormatError("checkpoint stores " + std::to_string(8 * c.real_bytes) + "-bit reals, requested " +
                      std::to_string(8 * sizeof(T)) + "-bit");
  }
  auto model = models::build_model<T>(c.spec, 0);
  if (model->params().size() != c.groups.size()) {
    throw FormatError("checkpoint has " + std::to_string(c.groups.size()) + " groups, spec builds " +
                      std::to_string(model->params().size()));
  }
  for (std::size_t k = 0; k < c.groups.size(); ++k) {
    auto& dst = model->params()[k];
    const auto& src = c.groups[k];
    if (dst.name != src.name || dst.value.rows() != src.value.rows() || dst.value.cols() != src.value.cols()) {
      throw FormatError("checkpoint group " + src.name + " " + src.value.shape() + " does not match " + dst.name + " " +
                        dst.value.shape());
    }
    dst.value = src.value.template cast<T>();
    dst.trainable = src.trainable;
    dst.decay_exempt = src.decay_exempt;
  }
  return model;
}

template void save_checkpoint<float>(const models::Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const models::Model<double>&, const std::filesystem::path&);
template std::unique_ptr<models::Model<float>> load_checkpoint<float>(const std::filesystem::path&);
template std::unique_ptr<models::Model<double>> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace grokkit::expcli
