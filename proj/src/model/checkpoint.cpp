#include "mmt/model/checkpoint.hpp"

#include "mmt/dataio/csv_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace mmt::model {
namespace {

constexpr char kMagic[8] = {'M', 'M', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_bytes(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_values(std::string& out, const Matrix& m) {
  out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  std::string get_bytes() {
    const auto n = get<std::uint32_t>();
    return std::string(take(n), n);
  }

  void get_values(Matrix& m) {
    std::memcpy(m.data(), take(static_cast<std::size_t>(m.size()) * sizeof(double)),
                static_cast<std::size_t>(m.size()) * sizeof(double));
  }

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string config_text(const ModelConfig& c) {
  std::string s;
  for (const auto& [k, v] : fields(c)) s += k + " = " + v + "\n";
  return s;
}

ModelConfig parse_config_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("checkpoint config line is malformed: '" + line + "'");
    set_field(c, line.substr(0, eq), line.substr(eq + 3));
  }
  c.validate();
  return c;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put_bytes(out, config_text(ck.config));
  put<std::uint64_t>(out, ck.seed);
  put<std::uint64_t>(out, ck.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, value] : ck.params) {
    put_bytes(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(value.rank()));
    for (Index e : value.shape()) put<std::int64_t>(out, e);
    put_values(out, value.data());
  }
  if (!ck.momentum.empty() && ck.momentum.size() != ck.params.size()) {
    throw std::invalid_argument("checkpoint momentum buffers do not match the parameter count");
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.momentum.size()));
  for (std::size_t i = 0; i < ck.momentum.size(); ++i) {
    if (ck.momentum[i].size() != ck.params[i].value.numel()) {
      throw std::invalid_argument("momentum buffer for '" + ck.params[i].name + "' has the wrong size");
    }
    put_values(out, ck.momentum[i]);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) throw std::runtime_error("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = parse_config_text(r.get_bytes());
  ck.seed = r.get<std::uint64_t>();
  ck.step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_bytes();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint parameter '" + name + "' has invalid rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<Index>(r.get<std::int64_t>()));
    Tensor t = Tensor::zeros(shape);
    r.get_values(t.data());
    ck.params.add(std::move(name), std::move(t));
  }
  const auto buffers = r.get<std::uint32_t>();
  if (buffers != 0 && buffers != count) throw std::runtime_error("checkpoint momentum count does not match parameters");
  for (std::uint32_t i = 0; i < buffers; ++i) {
    Matrix m(ck.params[i].value.rows(), ck.params[i].value.cols());
    r.get_values(m);
    ck.momentum.push_back(std::move(m));
  }
  if (!r.at_end()) throw std::runtime_error("checkpoint has trailing bytes");

  // Names and shapes must match what the stored config would build.
  const auto specs = param_specs(ck.config);
  if (specs.size() != ck.params.size()) throw std::runtime_error("checkpoint parameters do not match its model config");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name != ck.params[i].name || specs[i].shape != ck.params[i].value.shape()) {
      throw std::runtime_error("checkpoint parameter '" + ck.params[i].name + "' does not match its model config");
    }
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  data::write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DataError(path.string() + ": cannot open checkpoint");
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  return decode_checkpoint(bytes);
}

}  // namespace mmt::model
