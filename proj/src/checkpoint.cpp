#include "hdrfield/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "hdrfield/losses.hpp"

namespace hdrfield {

namespace {
using nlohmann::json;
constexpr char kMagic[5] = "HDRF";
constexpr std::uint32_t kVersion = 1;

void write_block(std::ostream& os, const double* data, std::int64_t n) {
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(n * sizeof(double)));
}

Eigen::VectorXd read_block(std::istream& is) {
  std::int64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!is || n < 0) throw std::runtime_error("corrupt checkpoint block");
  Eigen::VectorXd v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("truncated checkpoint block");
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json meta;
  const FieldConfig& fc = ckpt.fields.config;
  meta["encoding"] = {fc.encoding.num_frequencies_position,
                      fc.encoding.num_frequencies_direction,
                      fc.encoding.num_frequencies_time,
                      fc.encoding.include_identity};
  meta["static"] = {fc.static_hidden_layers, fc.static_hidden_width};
  meta["dynamic"] = {fc.dynamic_hidden_layers, fc.dynamic_hidden_width};
  meta["crf_kind"] = to_string(ckpt.crf.kind);
  meta["leak_alpha"] = ckpt.crf.leak_alpha;
  meta["fixed_gamma"] = ckpt.crf.fixed_gamma;
  meta["wb_sharing"] =
      ckpt.wb.sharing == WbSharing::kPerFrame ? "per_frame" : "per_tag";
  meta["wb_reference"] = ckpt.wb.reference_column;
  meta["wb_frame_to_column"] = ckpt.wb.frame_to_column;
  {
    std::vector<double> anchor(ckpt.wb.anchor_log_gains.data(),
                               ckpt.wb.anchor_log_gains.data() +
                                   ckpt.wb.anchor_log_gains.size());
    meta["wb_anchor"] = anchor;
  }
  meta["step"] = ckpt.step;
  meta["config_hash"] = ckpt.config_hash;
  meta["adam_t"] = ckpt.adam_t;
  meta["rng_state"] = ckpt.rng_state;
  const std::string header = meta.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const std::uint64_t len = header.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  const Eigen::VectorXd flat =
      flatten_parameters(ckpt.fields, ckpt.crf, ckpt.wb);
  write_block(os, flat.data(), flat.size());
  write_block(os, ckpt.adam_m.data(), ckpt.adam_m.size());
  write_block(os, ckpt.adam_v.data(), ckpt.adam_v.size());
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  std::uint32_t version = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!is || std::string(magic, 4) != "HDRF" || version != kVersion) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  const json meta = json::parse(header);

  Checkpoint ckpt;
  FieldConfig fc;
  fc.encoding.num_frequencies_position = meta["encoding"][0];
  fc.encoding.num_frequencies_direction = meta["encoding"][1];
  fc.encoding.num_frequencies_time = meta["encoding"][2];
  fc.encoding.include_identity = meta["encoding"][3];
  fc.static_hidden_layers = meta["static"][0];
  fc.static_hidden_width = meta["static"][1];
  fc.dynamic_hidden_layers = meta["dynamic"][0];
  fc.dynamic_hidden_width = meta["dynamic"][1];
  ckpt.fields = init_params(fc, 0);  // shapes; payload overwrites values

  const CrfKind kind = crf_kind_from_string(meta["crf_kind"]);
  switch (kind) {
    case CrfKind::kPiecewise: ckpt.crf = CrfParams::piecewise_identity(); break;
    case CrfKind::kFixed: ckpt.crf = CrfParams::fixed(meta["fixed_gamma"]); break;
    case CrfKind::kMlp: ckpt.crf = CrfParams::mlp_crf(0); break;
    case CrfKind::kNone: ckpt.crf = CrfParams::none(); break;
  }
  ckpt.crf.leak_alpha = meta["leak_alpha"];
  ckpt.crf.fixed_gamma = meta["fixed_gamma"];

  const std::vector<int> f2c = meta["wb_frame_to_column"];
  ckpt.wb.sharing = meta["wb_sharing"] == "per_frame" ? WbSharing::kPerFrame
                                                      : WbSharing::kPerTag;
  ckpt.wb.reference_column = meta["wb_reference"];
  ckpt.wb.frame_to_column = f2c;
  const int cols = ckpt.wb.sharing == WbSharing::kPerFrame
                       ? static_cast<int>(f2c.size())
                       : 3;
  ckpt.wb.log_gains = Eigen::MatrixXd::Zero(3, cols);
  ckpt.wb.anchor_log_gains = Eigen::MatrixXd::Zero(3, cols);
  if (meta.contains("wb_anchor")) {
    const std::vector<double> anchor = meta["wb_anchor"];
    std::copy(anchor.begin(), anchor.end(), ckpt.wb.anchor_log_gains.data());
  }

  ckpt.step = meta["step"];
  ckpt.config_hash = meta["config_hash"];
  ckpt.adam_t = meta["adam_t"];
  ckpt.rng_state = meta["rng_state"];

  const Eigen::VectorXd flat = read_block(is);
  unflatten_parameters(flat, ckpt.fields, ckpt.crf, ckpt.wb);
  ckpt.adam_m = read_block(is);
  ckpt.adam_v = read_block(is);
  return ckpt;
}

}  // namespace hdrfield
