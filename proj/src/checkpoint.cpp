#include "scatterfusion/checkpoint.hpp"

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scatterfusion/errors.hpp"

namespace scatterfusion {

namespace {

constexpr const char* kMagicPrefix = "SCATTERFUSION-CKPT v";
constexpr long kFormatVersion = 1;

void append_f64_le(std::string& buf, const std::vector<double>& src) {
  const char* bytes = reinterpret_cast<const char*>(src.data());
  const std::size_t n = src.size();
  if constexpr (std::endian::native == std::endian::little) {
    buf.append(bytes, n * 8);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (int b = 7; b >= 0; --b) buf.push_back(bytes[i * 8 + static_cast<std::size_t>(b)]);
  }
}

void read_f64_le(const std::string& buf, std::size_t offset, std::vector<double>& dst) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst.data(), buf.data() + offset, dst.size() * 8);
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      char tmp[8];
      for (int b = 0; b < 8; ++b)
        tmp[b] = buf[offset + i * 8 + static_cast<std::size_t>(7 - b)];
      std::memcpy(&dst[i], tmp, 8);
    }
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config: missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for key '") + key + "'");
  }
}

[[noreturn]] void corrupt(const std::string& path, const std::string& why) {
  throw IoError("checkpoint " + path + ": " + why);
}

}  // namespace

Checkpoint snapshot(const Forecaster& m, long step, long period) {
  return Checkpoint{m.cfg, step, period, parameter_snapshot(m)};
}

Forecaster restore(const Checkpoint& ck) {
  Forecaster m = make_forecaster(ck.config);
  load_into(m, ck);
  return m;
}

void load_into(Forecaster& m, const Checkpoint& ck) {
  const std::vector<std::string> diff = config_diff(m.cfg, ck.config);
  if (!diff.empty()) {
    std::string keys;
    for (const std::string& k : diff) {
      if (!keys.empty()) keys += ", ";
      keys += k;
    }
    throw ConfigError("checkpoint config mismatch on: " + keys);
  }
  auto refs = parameters(m);
  if (refs.size() != ck.params.size())
    throw IoError("checkpoint: expected " + std::to_string(refs.size()) +
                  " parameters, found " + std::to_string(ck.params.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].name != ck.params[i].first)
      throw IoError("checkpoint: parameter " + std::to_string(i) + " is '" +
                    ck.params[i].first + "', expected '" + refs[i].name + "'");
    if (!refs[i].value->same_shape(ck.params[i].second))
      throw IoError("checkpoint: shape mismatch for '" + refs[i].name + "'");
  }
  // Everything validated; now it is safe to mutate the model.
  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].value = ck.params[i].second;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::json header;
  header["format"] = "scatterfusion-ckpt";
  header["version"] = kFormatVersion;
  header["step"] = ck.step;
  header["period"] = ck.period;
  header["normalization"] = {{"kind", "per_window_zscore"}, {"sigma_floor", 1e-8}};
  header["config"] = config_to_json(ck.config);
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, value] : ck.params)
    manifest.push_back({{"name", name}, {"shape", value.shape}});
  header["params"] = manifest;

  const std::string header_text = header.dump();
  std::string blob = kMagicPrefix + std::to_string(kFormatVersion) + " " +
                     std::to_string(header_text.size()) + "\n" + header_text;
  for (const auto& [name, value] : ck.params) append_f64_le(blob, value.data);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint " + path + ": cannot open for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.flush();
  if (!out.good()) throw IoError("checkpoint " + path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint " + path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();

  const std::size_t eol = blob.find('\n');
  if (eol == std::string::npos) corrupt(path, "missing magic line");
  const std::string magic = blob.substr(0, eol);
  if (magic.rfind(kMagicPrefix, 0) != 0) corrupt(path, "not a checkpoint file");
  long version = 0;
  std::size_t header_len = 0;
  {
    std::istringstream ms(magic.substr(std::strlen(kMagicPrefix)));
    ms >> version;
    std::string len_tok;
    ms >> len_tok;
    if (!ms || len_tok.empty()) corrupt(path, "malformed magic line");
    header_len = static_cast<std::size_t>(std::stoull(len_tok));
  }
  if (version != kFormatVersion)
    throw IoError("checkpoint " + path + ": format version " + std::to_string(version) +
                  " unsupported (expected " + std::to_string(kFormatVersion) + ")");
  if (eol + 1 + header_len > blob.size()) corrupt(path, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(eol + 1, header_len));
  } catch (const nlohmann::json::exception&) {
    corrupt(path, "unparsable header");
  }

  Checkpoint ck;
  try {
    ck.config = config_from_json(header.at("config"));
    ck.step = header.at("step").get<long>();
    ck.period = header.value("period", 0L);
    std::size_t offset = eol + 1 + header_len;
    for (const nlohmann::json& entry : header.at("params")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::vector<std::int64_t> shape = entry.at("shape").get<std::vector<std::int64_t>>();
      Tensor t = Tensor::zeros(shape);
      const std::size_t bytes = t.data.size() * 8;
      if (offset + bytes > blob.size()) corrupt(path, "truncated parameter block '" + name + "'");
      read_f64_le(blob, offset, t.data);
      offset += bytes;
      ck.params.emplace_back(name, std::move(t));
    }
    if (offset != blob.size()) corrupt(path, "trailing bytes after parameter blocks");
  } catch (const nlohmann::json::exception&) {
    corrupt(path, "malformed header fields");
  }
  return ck;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"t_s", cfg.T_s},
                        {"t_p", cfg.T_p},
                        {"t_p_max", cfg.T_p_max},
                        {"channels", cfg.C},
                        {"d_model", cfg.D},
                        {"d_attn", cfg.d},
                        {"scales", cfg.J},
                        {"strides", cfg.strides},
                        {"mrta_layers", cfg.num_mrta_layers},
                        {"k_g", cfg.K_g},
                        {"use_hstm", cfg.use_hstm},
                        {"use_safe", cfg.use_safe},
                        {"use_mrta", cfg.use_mrta},
                        {"use_tsr_loss", cfg.use_tsr_loss},
                        {"seed", cfg.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.T_s = get_field<long>(j, "t_s");
  cfg.T_p = get_field<long>(j, "t_p");
  cfg.T_p_max = get_field<long>(j, "t_p_max");
  cfg.C = get_field<long>(j, "channels");
  cfg.D = get_field<long>(j, "d_model");
  cfg.d = get_field<long>(j, "d_attn");
  cfg.J = get_field<long>(j, "scales");
  cfg.strides = get_field<std::vector<long>>(j, "strides");
  cfg.num_mrta_layers = get_field<long>(j, "mrta_layers");
  cfg.K_g = get_field<long>(j, "k_g");
  cfg.use_hstm = get_field<bool>(j, "use_hstm");
  cfg.use_safe = get_field<bool>(j, "use_safe");
  cfg.use_mrta = get_field<bool>(j, "use_mrta");
  cfg.use_tsr_loss = get_field<bool>(j, "use_tsr_loss");
  cfg.seed = get_field<std::uint64_t>(j, "seed");
  return cfg;
}

std::vector<std::string> config_diff(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::string> out;
  if (a.T_s != b.T_s) out.push_back("t_s");
  if (a.T_p != b.T_p) out.push_back("t_p");
  if (a.T_p_max != b.T_p_max) out.push_back("t_p_max");
  if (a.C != b.C) out.push_back("channels");
  if (a.D != b.D) out.push_back("d_model");
  if (a.d != b.d) out.push_back("d_attn");
  if (a.J != b.J) out.push_back("scales");
  if (a.strides != b.strides) out.push_back("strides");
  if (a.num_mrta_layers != b.num_mrta_layers) out.push_back("mrta_layers");
  if (a.K_g != b.K_g) out.push_back("k_g");
  if (a.use_hstm != b.use_hstm) out.push_back("use_hstm");
  if (a.use_safe != b.use_safe) out.push_back("use_safe");
  if (a.use_mrta != b.use_mrta) out.push_back("use_mrta");
  if (a.use_tsr_loss != b.use_tsr_loss) out.push_back("use_tsr_loss");
  if (a.seed != b.seed) out.push_back("seed");
  return out;
}

}  // namespace scatterfusion
