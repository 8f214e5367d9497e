#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psno/datagen.hpp"
#include "psno/errors.hpp"

// Dataset file layout (little-endian):
//   8 bytes magic "NOPSDS01"
//   u32 manifest length, UTF-8 JSON manifest
//   per record: input delta, input omega, target delta, target omega as raw
//   f64 arrays; lengths implied by the manifest windows. Stored values are
//   physical (unnormalized, unclipped).

namespace psno::datagen {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'N', 'O', 'P', 'S', 'D', 'S', '0', '1'};

json config_to_json(const SamplingConfig& c) {
  return json{{"pm_range", {c.pm_range[0], c.pm_range[1]}},
              {"d_range", {c.d_range[0], c.d_range[1]}},
              {"unstable_fraction", c.unstable_fraction},
              {"dt", c.dt},
              {"input_end", c.input_end},
              {"target_start", c.target_start},
              {"target_end", c.target_end},
              {"n_train", c.n_train},
              {"n_val", c.n_val},
              {"n_test", c.n_test},
              {"seed", c.seed},
              {"E", c.E},
              {"V", c.V},
              {"X", c.X},
              {"H", c.H},
              {"f0", c.f0}};
}

SamplingConfig config_from_json(const json& j) {
  SamplingConfig c;
  c.pm_range = {j.at("pm_range").at(0).get<double>(), j.at("pm_range").at(1).get<double>()};
  c.d_range = {j.at("d_range").at(0).get<double>(), j.at("d_range").at(1).get<double>()};
  c.unstable_fraction = j.at("unstable_fraction").get<double>();
  c.dt = j.at("dt").get<double>();
  c.input_end = j.at("input_end").get<double>();
  c.target_start = j.at("target_start").get<double>();
  c.target_end = j.at("target_end").get<double>();
  c.n_train = j.at("n_train").get<std::size_t>();
  c.n_val = j.at("n_val").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.E = j.at("E").get<double>();
  c.V = j.at("V").get<double>();
  c.X = j.at("X").get<double>();
  c.H = j.at("H").get<double>();
  c.f0 = j.at("f0").get<double>();
  return c;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& v, std::size_t n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw TruncatedFileError("dataset file truncated inside a record");
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
  json manifest;
  manifest["config"] = config_to_json(dataset.config);
  manifest["split"] = to_string(dataset.split);
  if (dataset.stats) {
    manifest["stats"] = {{"delta_min", dataset.stats->delta_min},
                         {"delta_max", dataset.stats->delta_max},
                         {"omega_absmax", dataset.stats->omega_absmax}};
  } else {
    manifest["stats"] = nullptr;
  }
  json records = json::array();
  for (const TrajectoryRecord& r : dataset.records) {
    records.push_back({{"E", r.params.E},
                       {"V", r.params.V},
                       {"X", r.params.X},
                       {"H", r.params.H},
                       {"D", r.params.D},
                       {"f0", r.params.f0},
                       {"Pm", r.params.Pm},
                       {"Pm1", r.params.Pm1},
                       {"label", smib::to_string(r.label)}});
  }
  manifest["records"] = std::move(records);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const TrajectoryRecord& r : dataset.records) {
    write_doubles(out, r.input.delta);
    write_doubles(out, r.input.omega);
    write_doubles(out, r.target.delta);
    write_doubles(out, r.target.omega);
  }
  if (!out) throw IoError("failed while writing " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in) throw TruncatedFileError("dataset file shorter than its magic: " + path);
  if (std::memcmp(magic, kMagic, 6) != 0) {
    throw MagicMismatchError("not a dataset file: " + path);
  }
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw VersionMismatchError("unsupported dataset version in " + path);
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw TruncatedFileError("dataset file truncated before manifest: " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw TruncatedFileError("dataset manifest truncated: " + path);

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad dataset manifest: ") + e.what());
  }

  Dataset ds;
  ds.config = config_from_json(manifest.at("config"));
  const std::string split = manifest.at("split").get<std::string>();
  ds.split = split == "train" ? Split::Train : split == "val" ? Split::Val : Split::Test;
  if (!manifest.at("stats").is_null()) {
    NormalizationStats stats;
    stats.delta_min = manifest["stats"].at("delta_min").get<double>();
    stats.delta_max = manifest["stats"].at("delta_max").get<double>();
    stats.omega_absmax = manifest["stats"].at("omega_absmax").get<double>();
    ds.stats = stats;
  }

  const std::size_t n_in = ds.config.input_points();
  const std::size_t n_tgt = ds.config.target_points();
  for (const json& rj : manifest.at("records")) {
    TrajectoryRecord r;
    r.params.E = rj.at("E").get<double>();
    r.params.V = rj.at("V").get<double>();
    r.params.X = rj.at("X").get<double>();
    r.params.H = rj.at("H").get<double>();
    r.params.D = rj.at("D").get<double>();
    r.params.f0 = rj.at("f0").get<double>();
    r.params.Pm = rj.at("Pm").get<double>();
    r.params.Pm1 = rj.at("Pm1").get<double>();
    r.label = rj.at("label").get<std::string>() == "stable" ? StabilityLabel::Stable
                                                            : StabilityLabel::Unstable;
    r.input.t0 = 0.0;
    r.input.dt = ds.config.dt;
    r.target.t0 = ds.config.target_start;
    r.target.dt = ds.config.dt;
    read_doubles(in, r.input.delta, n_in);
    read_doubles(in, r.input.omega, n_in);
    read_doubles(in, r.target.delta, n_tgt);
    read_doubles(in, r.target.omega, n_tgt);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace psno::datagen
