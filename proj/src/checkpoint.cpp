#include "mmctr/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mmctr/errors.hpp"

namespace mmctr {

namespace {

std::string at(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string at(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

const Json& field(const Json& obj, const std::string& path, const std::string& key) {
    if (!obj.is_object()) throw FormatError(path.empty() ? "/" : path, "expected an object");
    if (!obj.contains(key)) throw FormatError(at(path, key), "missing field");
    return obj.at(key);
}

const Json& array_field(const Json& obj, const std::string& path, const std::string& key) {
    const Json& v = field(obj, path, key);
    if (!v.is_array()) throw FormatError(at(path, key), "expected an array");
    return v;
}

double number(const Json& v, const std::string& path) {
    if (!v.is_number()) throw FormatError(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw FormatError(path, "non-finite number");
    return d;
}

std::vector<double> numbers(const Json& arr, const std::string& path) {
    if (!arr.is_array()) throw FormatError(path, "expected an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(number(arr[i], at(path, i)));
    return out;
}

Json table_to_json(const EmbeddingTable& t) {
    Json arr = Json::array();
    for (float v : t.data()) arr.push_back(static_cast<double>(v));
    return arr;
}

EmbeddingTable table_from_json(const Json& arr, const std::string& path, const ManifoldSpec& spec,
                               EntityKind kind, std::size_t rows) {
    if (!arr.is_array()) throw FormatError(path, "expected an array");
    if (arr.size() != rows * spec.dim()) {
        throw FormatError(path, "expected " + std::to_string(rows * spec.dim()) + " values, found " +
                                    std::to_string(arr.size()));
    }
    std::vector<float> data(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const double d = number(arr[i], at(path, i));
        const auto f = static_cast<float>(d);
        if (static_cast<double>(f) != d) throw FormatError(at(path, i), "value is not a single-precision number");
        data[i] = f;
    }
    std::vector<double> row(spec.dim());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < spec.dim(); ++k) row[k] = data[r * spec.dim() + k];
        if (!kernels::is_valid_point(spec, row)) {
            throw FormatError(at(path, r * spec.dim()), "row " + std::to_string(r) + " lies outside the manifold");
        }
    }
    return EmbeddingTable(spec, kind, rows, std::move(data));
}

IdIndex ids_from_json(const Json& arr, const std::string& path) {
    if (!arr.is_array()) throw FormatError(path, "expected an array");
    std::vector<std::string> ids;
    ids.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_string()) throw FormatError(at(path, i), "expected a string id");
        ids.push_back(arr[i].get<std::string>());
    }
    auto index = IdIndex::from_ids(std::move(ids));
    if (!index) throw FormatError(path, "duplicate id");
    if (index->empty()) throw FormatError(path, "vocabulary is empty");
    return std::move(*index);
}

template <typename Fn>
auto as_format_error(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        // Config parsers report "<pointer>: <constraint>".
        const std::string msg = e.what();
        const auto sep = msg.find(": ");
        if (!msg.empty() && msg.front() == '/' && sep != std::string::npos) {
            throw FormatError(path + msg.substr(0, sep), msg.substr(sep + 2));
        }
        throw FormatError(path.empty() ? "/" : path, msg);
    }
}

}  // namespace

Json checkpoint_to_json(const ModelCheckpoint& ckpt) {
    Json j;
    j["version"] = kCheckpointVersion;
    j["model_config"] = to_json(ckpt.config.model, false);
    j["train_config"] = train_fields_to_json(ckpt.config);
    Json manifolds = Json::array();
    for (const auto& s : ckpt.config.model.manifolds) manifolds.push_back(to_json(s));
    j["manifolds"] = std::move(manifolds);
    j["vocab"] = Json{{"users", ckpt.vocab.users.ids()}, {"ads", ckpt.vocab.ads.ids()}};
    Json users = Json::array();
    Json ads = Json::array();
    for (std::size_t m = 0; m < ckpt.params.num_manifolds(); ++m) {
        users.push_back(table_to_json(ckpt.params.users[m]));
        ads.push_back(table_to_json(ckpt.params.ads[m]));
    }
    j["user_tables"] = std::move(users);
    j["ad_tables"] = std::move(ads);
    const FusionParams& f = ckpt.params.fusion;
    Json attention = Json::array();
    for (std::size_t r = 0; r < f.size(); ++r) {
        Json row = Json::array();
        for (std::size_t c = 0; c < f.size(); ++c) row.push_back(f.attention_at(r, c));
        attention.push_back(std::move(row));
    }
    j["fusion"] = Json{{"manifold_bias", f.manifold_bias},
                       {"manifold_scale", f.manifold_scale},
                       {"attention", std::move(attention)},
                       {"global_bias", f.global_bias}};
    return j;
}

ModelCheckpoint checkpoint_from_json(const Json& j) {
    if (!j.is_object()) throw FormatError("/", "checkpoint must be a JSON object");
    const Json& version = field(j, "", "version");
    if (version.is_string()) {
        if (version.get<std::string>() != kCheckpointVersion) {
            throw VersionError("unsupported checkpoint version '" + version.get<std::string>() + "'");
        }
    } else if (version.is_number()) {
        throw VersionError("unsupported checkpoint version " + version.dump());
    } else {
        throw FormatError("/version", "expected a string");
    }

    ModelCheckpoint ckpt;
    const Json& manifolds = array_field(j, "", "manifolds");
    std::vector<ManifoldSpec> specs;
    for (std::size_t i = 0; i < manifolds.size(); ++i) {
        const std::string p = at("/manifolds", i);
        specs.push_back(as_format_error("", [&] { return manifold_spec_from_json(manifolds[i], p); }));
    }
    if (specs.empty()) throw FormatError("/manifolds", "at least one manifold required");

    ckpt.config.model = as_format_error("", [&] {
        return model_config_from_json(field(j, "", "model_config"), "/model_config", false);
    });
    ckpt.config.model.manifolds = specs;
    as_format_error("/model_config", [&] { ckpt.config.model.validate(); });

    const Json& tc = field(j, "", "train_config");
    ckpt.config = as_format_error("", [&] {
        return train_config_from_json(tc, "/train_config", ckpt.config.model);
    });

    const Json& vocab = field(j, "", "vocab");
    ckpt.vocab.users = ids_from_json(field(vocab, "/vocab", "users"), "/vocab/users");
    ckpt.vocab.ads = ids_from_json(field(vocab, "/vocab", "ads"), "/vocab/ads");

    const Json& ut = array_field(j, "", "user_tables");
    const Json& at_ = array_field(j, "", "ad_tables");
    if (ut.size() != specs.size()) throw FormatError("/user_tables", "expected one table per manifold");
    if (at_.size() != specs.size()) throw FormatError("/ad_tables", "expected one table per manifold");
    for (std::size_t m = 0; m < specs.size(); ++m) {
        ckpt.params.users.push_back(
            table_from_json(ut[m], at("/user_tables", m), specs[m], EntityKind::User, ckpt.vocab.users.size()));
        ckpt.params.ads.push_back(
            table_from_json(at_[m], at("/ad_tables", m), specs[m], EntityKind::Ad, ckpt.vocab.ads.size()));
    }

    const Json& fj = field(j, "", "fusion");
    FusionParams& f = ckpt.params.fusion;
    const std::size_t mc = specs.size();
    f.manifold_bias = numbers(field(fj, "/fusion", "manifold_bias"), "/fusion/manifold_bias");
    f.manifold_scale = numbers(field(fj, "/fusion", "manifold_scale"), "/fusion/manifold_scale");
    if (f.manifold_bias.size() != mc) throw FormatError("/fusion/manifold_bias", "expected one entry per manifold");
    if (f.manifold_scale.size() != mc) throw FormatError("/fusion/manifold_scale", "expected one entry per manifold");
    for (std::size_t m = 0; m < mc; ++m) {
        if (!(f.manifold_scale[m] > 0.0)) throw FormatError(at("/fusion/manifold_scale", m), "must be > 0");
    }
    const Json& att = field(fj, "/fusion", "attention");
    if (!att.is_array() || att.size() != mc) throw FormatError("/fusion/attention", "expected an M x M array");
    for (std::size_t r = 0; r < mc; ++r) {
        const auto row = numbers(att[r], at("/fusion/attention", r));
        if (row.size() != mc) throw FormatError(at("/fusion/attention", r), "expected M entries");
        f.attention.insert(f.attention.end(), row.begin(), row.end());
    }
    f.global_bias = number(field(fj, "/fusion", "global_bias"), "/fusion/global_bias");
    return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
    const std::string text = checkpoint_to_json(ckpt).dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out << text << '\n';
    if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    Json j;
    try {
        j = Json::parse(buf.str());
    } catch (const Json::parse_error& e) {
        throw FormatError("/", std::string("invalid JSON: ") + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace mmctr
