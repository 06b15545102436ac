#include "bayesdyn/checkpoint.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "bayesdyn/csv.hpp"
#include "bayesdyn/errors.hpp"
#include "json.hpp"

namespace bayesdyn {

namespace {

std::string json_array(std::span<const double> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_number(values[i]);
  }
  return out + "]";
}

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

void read_array(const nlohmann::json& doc, const char* key, std::span<double> dest) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw DataError(std::string("checkpoint is missing array '") + key + "'");
  }
  const auto& arr = doc[key];
  if (arr.size() != dest.size()) {
    throw DataError(fmt::format("checkpoint array '{}' has {} entries, shape requires {}", key,
                                arr.size(), dest.size()));
  }
  for (std::size_t i = 0; i < dest.size(); ++i) {
    if (!arr[i].is_number()) throw DataError(fmt::format("checkpoint '{}'[{}] is not a number", key, i));
    dest[i] = arr[i].get<double>();
    if (!std::isfinite(dest[i])) throw DataError(fmt::format("checkpoint '{}'[{}] is not finite", key, i));
  }
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& checkpoint) {
  const auto& w = checkpoint.weights;
  const auto& s = w.shape();
  const auto& meta = checkpoint.metadata;
  if (!w.all_finite()) throw std::invalid_argument("cannot serialise non-finite weights");
  std::string out = "{\n";
  out += fmt::format(
      "  \"shape\": {{\"input_dim\": {}, \"hidden_dim\": {}, \"output_dim\": {}, \"kernel_order\": {}}},\n",
      s.input_dim, s.hidden_dim, s.output_dim, s.kernel_order);
  out += "  \"w1\": " + json_array(w.w1()) + ",\n";
  out += "  \"b1\": " + json_array(w.b1()) + ",\n";
  out += "  \"w2\": " + json_array(w.w2()) + ",\n";
  out += "  \"b2\": " + json_array(w.b2()) + ",\n";
  out += fmt::format(
      "  \"metadata\": {{\"seed\": {}, \"dropout_rate\": {}, \"h\": {}, \"created_by_version\": {}}}\n",
      meta.seed, format_number(meta.dropout_rate), format_number(meta.h),
      json_string(meta.created_by_version));
  out += "}\n";
  return out;
}

Checkpoint checkpoint_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    const auto& js = doc.at("shape");
    NetworkShape shape;
    shape.input_dim = js.at("input_dim").get<std::size_t>();
    shape.hidden_dim = js.at("hidden_dim").get<std::size_t>();
    shape.output_dim = js.at("output_dim").get<std::size_t>();
    shape.kernel_order = js.at("kernel_order").get<unsigned>();
    try {
      shape.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("checkpoint shape is invalid: ") + e.what());
    }

    Checkpoint cp;
    cp.weights = WeightSet(shape);
    read_array(doc, "w1", cp.weights.w1());
    read_array(doc, "b1", cp.weights.b1());
    read_array(doc, "w2", cp.weights.w2());
    read_array(doc, "b2", cp.weights.b2());

    if (doc.contains("metadata")) {
      const auto& jm = doc["metadata"];
      cp.metadata.seed = jm.value("seed", std::uint64_t{0});
      cp.metadata.dropout_rate = jm.value("dropout_rate", 0.0);
      cp.metadata.h = jm.value("h", 0.0);
      cp.metadata.created_by_version = jm.value("created_by_version", std::string{});
    }
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_json(checkpoint);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace bayesdyn
