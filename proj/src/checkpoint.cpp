#include "framecast/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace framecast {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'F', 'C', 'K', 'P'};

template <class T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError(std::string("checkpoint: truncated while reading ") + what);
    return v;
}

void write_tensor_record(std::ostream& os, const std::string& name, const Tensor& t) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint8_t>(os, static_cast<uint8_t>(t.dtype()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<uint64_t>(os, static_cast<uint64_t>(t.dim(i)));
    uint64_t bytes = static_cast<uint64_t>(t.numel()) * dtype_size(t.dtype());
    write_pod<uint64_t>(os, bytes);
    if (t.dtype() == DType::f32)
        os.write(reinterpret_cast<const char*>(t.ptr<float>()), static_cast<std::streamsize>(bytes));
    else
        os.write(reinterpret_cast<const char*>(t.ptr<double>()), static_cast<std::streamsize>(bytes));
}

struct RawRecord {
    DType dtype;
    Shape shape;
    std::vector<char> data;

    Tensor materialize() const {
        Tensor t = Tensor::zeros(shape, dtype);
        size_t bytes = static_cast<size_t>(t.numel()) * dtype_size(dtype);
        if (bytes != data.size()) throw IoError("checkpoint: record size mismatch");
        if (dtype == DType::f32)
            std::memcpy(t.ptr<float>(), data.data(), bytes);
        else
            std::memcpy(t.ptr<double>(), data.data(), bytes);
        return t;
    }
};

json unet_to_json(const UNetConfig& c) {
    return json{{"frame_channels", c.frame_channels},
                {"k", c.k},
                {"p", c.p},
                {"f", c.f},
                {"base_width", c.base_width},
                {"channel_multipliers", c.channel_multipliers},
                {"attention_levels", c.attention_levels},
                {"groups", c.groups},
                {"heads", c.heads},
                {"time_embed_dim", c.time_embed_dim},
                {"spade_hidden", c.spade_hidden}};
}

UNetConfig unet_from_json(const json& j) {
    UNetConfig c;
    c.frame_channels = j.at("frame_channels").get<int>();
    c.k = j.at("k").get<int>();
    c.p = j.at("p").get<int>();
    c.f = j.at("f").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
    c.attention_levels = j.at("attention_levels").get<std::vector<int>>();
    c.groups = j.at("groups").get<int>();
    c.heads = j.at("heads").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    c.spade_hidden = j.at("spade_hidden").get<int>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const DenoiserModel& model,
                     const DiffusionSchedule& sched, int64_t global_step, int64_t epoch,
                     const AdamState* adam, const std::vector<Tensor>* ema, double ema_decay) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");

    json header;
    header["format_version"] = kCheckpointVersion;
    header["dtype"] = dtype_name(model.dtype());
    header["unet"] = unet_to_json(model.config());
    header["schedule"] = {{"T", sched.T}, {"beta_start", sched.beta_start}, {"beta_end", sched.beta_end}};
    header["global_step"] = global_step;
    header["epoch"] = epoch;
    header["has_adam"] = adam != nullptr && adam->initialized();
    header["has_ema"] = ema != nullptr && !ema->empty();
    header["ema_decay"] = ema_decay;
    if (adam != nullptr && adam->initialized()) {
        header["adam"] = {{"lr", adam->lr},
                          {"beta1", adam->beta1},
                          {"beta2", adam->beta2},
                          {"eps", adam->eps},
                          {"step_count", adam->step_count}};
    }
    std::string header_str = header.dump();

    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kCheckpointVersion);
    write_pod<uint64_t>(os, static_cast<uint64_t>(header_str.size()));
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

    const auto& names = model.parameter_names();
    const auto& params = model.parameters();
    for (size_t i = 0; i < names.size(); ++i) write_tensor_record(os, names[i], params[i]);
    if (adam != nullptr && adam->initialized()) {
        for (size_t i = 0; i < names.size(); ++i) {
            write_tensor_record(os, "adam.m." + names[i], adam->m[i]);
            write_tensor_record(os, "adam.v." + names[i], adam->v[i]);
        }
    }
    if (ema != nullptr && !ema->empty()) {
        if (ema->size() != names.size())
            throw UsageError("checkpoint: EMA list does not match parameter list");
        for (size_t i = 0; i < names.size(); ++i) write_tensor_record(os, "ema." + names[i], (*ema)[i]);
    }
    os.flush();
    if (!os) throw IoError("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, bool use_ema) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: " + path + " is not a checkpoint file (bad magic)");
    uint32_t version = read_pod<uint32_t>(is, "version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(version));
    uint64_t header_len = read_pod<uint64_t>(is, "header length");
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw IoError("checkpoint: truncated header");

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed header: ") + e.what());
    }

    Checkpoint meta;
    try {
        meta.unet = unet_from_json(header.at("unet"));
        std::string dt = header.at("dtype").get<std::string>();
        if (dt == "f32")
            meta.dtype = DType::f32;
        else if (dt == "f64")
            meta.dtype = DType::f64;
        else
            throw DataError("checkpoint: unknown dtype " + dt);
        meta.T = header.at("schedule").at("T").get<int>();
        meta.beta_start = header.at("schedule").at("beta_start").get<double>();
        meta.beta_end = header.at("schedule").at("beta_end").get<double>();
        meta.global_step = header.at("global_step").get<int64_t>();
        meta.epoch = header.at("epoch").get<int64_t>();
        meta.has_adam = header.at("has_adam").get<bool>();
        meta.has_ema = header.at("has_ema").get<bool>();
        meta.ema_decay = header.value("ema_decay", 0.0);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: header missing fields: ") + e.what());
    }

    std::map<std::string, RawRecord> records;
    while (true) {
        uint32_t name_len = 0;
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.eof()) break;
        if (!is) throw IoError("checkpoint: truncated record");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        RawRecord rec;
        rec.dtype = static_cast<DType>(read_pod<uint8_t>(is, "record dtype"));
        if (rec.dtype != DType::f32 && rec.dtype != DType::f64)
            throw DataError("checkpoint: record '" + name + "' has invalid dtype");
        uint32_t ndim = read_pod<uint32_t>(is, "record rank");
        for (uint32_t d = 0; d < ndim; ++d)
            rec.shape.push_back(static_cast<int64_t>(read_pod<uint64_t>(is, "record dim")));
        uint64_t bytes = read_pod<uint64_t>(is, "record size");
        rec.data.resize(bytes);
        is.read(rec.data.data(), static_cast<std::streamsize>(bytes));
        if (!is) throw IoError("checkpoint: truncated tensor data for '" + name + "'");
        if (!records.emplace(name, std::move(rec)).second)
            throw DataError("checkpoint: duplicate record '" + name + "'");
    }

    DenoiserModel model(meta.unet, meta.dtype, /*init_seed=*/0);
    DiffusionSchedule sched = make_linear_schedule(meta.T, meta.beta_start, meta.beta_end);
    LoadedCheckpoint out(meta, std::move(model), std::move(sched));

    const auto& names = out.model.parameter_names();
    auto& params = out.model.parameters();
    std::set<std::string> consumed;
    auto take = [&](const std::string& name, const Shape& want, DType dt) -> Tensor {
        auto it = records.find(name);
        if (it == records.end()) throw DataError("checkpoint: missing tensor '" + name + "'");
        if (it->second.dtype != dt)
            throw DataError("checkpoint: tensor '" + name + "' dtype mismatch");
        if (it->second.shape != want)
            throw DataError("checkpoint: tensor '" + name + "' has shape " +
                            shape_str(it->second.shape) + ", expected " + shape_str(want));
        consumed.insert(name);
        return it->second.materialize();
    };

    for (size_t i = 0; i < names.size(); ++i)
        params[i].copy_from(take(names[i], params[i].shape(), meta.dtype));

    if (meta.has_adam) {
        out.adam.init(params);
        out.adam.lr = header.at("adam").at("lr").get<double>();
        out.adam.beta1 = header.at("adam").at("beta1").get<double>();
        out.adam.beta2 = header.at("adam").at("beta2").get<double>();
        out.adam.eps = header.at("adam").at("eps").get<double>();
        out.adam.step_count = header.at("adam").at("step_count").get<int64_t>();
        for (size_t i = 0; i < names.size(); ++i) {
            out.adam.m[i].copy_from(take("adam.m." + names[i], params[i].shape(), meta.dtype));
            out.adam.v[i].copy_from(take("adam.v." + names[i], params[i].shape(), meta.dtype));
        }
    }
    if (meta.has_ema) {
        for (size_t i = 0; i < names.size(); ++i)
            out.ema.push_back(take("ema." + names[i], params[i].shape(), meta.dtype));
    }

    for (const auto& [name, rec] : records)
        if (!consumed.count(name))
            throw DataError("checkpoint: unexpected tensor '" + name + "'");

    if (use_ema) {
        if (!meta.has_ema) throw ConfigError("checkpoint: EMA weights requested but not present");
        for (size_t i = 0; i < names.size(); ++i) params[i].copy_from(out.ema[i]);
    }
    return out;
}

}  // namespace framecast
