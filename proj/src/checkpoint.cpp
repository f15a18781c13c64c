#include "lpdh/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lpdh {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    template <typename U>
    void pod(U v) {
        os_.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void u8(bool v) { pod<std::uint8_t>(v ? 1 : 0); }
    void u32(std::size_t v) { pod(static_cast<std::uint32_t>(v)); }
    void u64(std::uint64_t v) { pod(v); }
    void str(const std::string& s) {
        u32(s.size());
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    template <typename T>
    void tensor(const Tensor<T>& t) {
        u32(t.ndim());
        for (std::size_t d : t.shape()) u64(d);
        for (T v : t.data()) pod(static_cast<float>(v));
    }

private:
    std::ostream& os_;
};

class Reader {
public:
    Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

    void raw(void* dst, std::size_t n, const char* what) {
        is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw CheckpointError(CheckpointErrorKind::truncated,
                                  "checkpoint " + path_ + " truncated while reading " + what);
        }
    }
    template <typename U>
    U pod(const char* what) {
        U v;
        raw(&v, sizeof v, what);
        return v;
    }
    bool u8(const char* what) { return pod<std::uint8_t>(what) != 0; }
    std::size_t u32(const char* what) { return pod<std::uint32_t>(what); }
    std::uint64_t u64(const char* what) { return pod<std::uint64_t>(what); }
    std::string str(const char* what) {
        std::string s(u32(what), '\0');
        raw(s.data(), s.size(), what);
        return s;
    }
    Tensor<float> tensor(const std::string& name) {
        const std::size_t nd = u32(name.c_str());
        if (nd == 0 || nd > 8) {
            throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint " + path_ + ": bad rank for " + name);
        }
        Shape shape(nd);
        for (auto& d : shape) {
            d = u64(name.c_str());
            if (d == 0 || d > (1u << 28)) {
                throw CheckpointError(CheckpointErrorKind::truncated,
                                      "checkpoint " + path_ + ": bad extent for " + name);
            }
        }
        std::vector<float> data(shape_numel(shape));
        raw(data.data(), data.size() * sizeof(float), name.c_str());
        return Tensor<float>(shape, std::move(data));
    }

private:
    std::istream& is_;
    std::string path_;
};

void write_unet(Writer& w, const UNetConfig& c) {
    w.u32(c.depth);
    w.u32(c.base_channels);
    w.u32(c.in_channels);
    w.u32(c.out_channels);
    w.u8(c.low_rank);
    w.u8(c.zero_head);
}

UNetConfig read_unet(Reader& r) {
    UNetConfig c;
    c.depth = r.u32("unet depth");
    c.base_channels = r.u32("unet channels");
    c.in_channels = r.u32("unet in_channels");
    c.out_channels = r.u32("unet out_channels");
    c.low_rank = r.u8("unet low_rank");
    c.zero_head = r.u8("unet zero_head");
    return c;
}

void write_config(Writer& w, const ModelConfig& c) {
    w.u32(c.terms);
    write_unet(w, c.bottom);
    write_unet(w, c.k_net);
    w.u8(c.single_unet);
    w.u8(c.explicit_factorials);
    w.u8(c.tucker_enabled);
    w.u8(c.identity_bottom);
    w.u8(c.tucker.ranks.has_value());
    const Ranks ranks = c.tucker.ranks.value_or(Ranks{0, 0, 0});
    for (std::size_t r : ranks) w.u32(r);
    w.pod(c.tucker.rank_fraction);
    w.pod(c.tucker.tol);
    w.pod(static_cast<std::int32_t>(c.tucker.max_iter));
    w.u64(c.tucker.seed);
    w.u64(c.seed);
}

ModelConfig read_config(Reader& r) {
    ModelConfig c;
    c.terms = r.u32("terms");
    c.bottom = read_unet(r);
    c.k_net = read_unet(r);
    c.single_unet = r.u8("single_unet");
    c.explicit_factorials = r.u8("explicit_factorials");
    c.tucker_enabled = r.u8("tucker_enabled");
    c.identity_bottom = r.u8("identity_bottom");
    const bool has_ranks = r.u8("tucker ranks");
    Ranks ranks{};
    for (auto& x : ranks) x = r.u32("tucker ranks");
    if (has_ranks) c.tucker.ranks = ranks;
    c.tucker.rank_fraction = r.pod<double>("tucker rank_fraction");
    c.tucker.tol = r.pod<double>("tucker tol");
    c.tucker.max_iter = r.pod<std::int32_t>("tucker max_iter");
    c.tucker.seed = r.u64("tucker seed");
    c.seed = r.u64("seed");
    return c;
}

[[noreturn]] void mismatch(const std::string& field, const std::string& stored, const std::string& model) {
    throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                          "checkpoint mismatch in " + field + ": checkpoint has " + stored + ", model has " + model);
}

void check_unet(const std::string& prefix, const UNetConfig& a, const UNetConfig& b) {
    auto field = [&](const char* name, std::size_t x, std::size_t y) {
        if (x != y) mismatch(prefix + "." + name, std::to_string(x), std::to_string(y));
    };
    field("depth", a.depth, b.depth);
    field("base_channels", a.base_channels, b.base_channels);
    field("in_channels", a.in_channels, b.in_channels);
    field("out_channels", a.out_channels, b.out_channels);
    field("low_rank", a.low_rank, b.low_rank);
    field("zero_head", a.zero_head, b.zero_head);
}

} // namespace

template <typename T>
void save_checkpoint(const std::string& path, const DehazeModel<T>& model, const AdamState<T>* optimizer) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw CheckpointError(CheckpointErrorKind::io, "cannot write checkpoint: " + tmp);
        Writer w(os);
        os.write(kCheckpointMagic, 5);
        w.u32(kCheckpointVersion);
        write_config(w, model.config());
        const auto params = model.parameters();
        w.u32(params.size());
        for (const auto& p : params) {
            w.str(p.name);
            w.tensor(p.var.value());
        }
        const bool has_opt = optimizer && optimizer->m.size() == params.size();
        w.u8(has_opt);
        if (has_opt) {
            w.u64(optimizer->step);
            for (std::size_t i = 0; i < params.size(); ++i) {
                w.tensor(optimizer->m[i]);
                w.tensor(optimizer->v[i]);
            }
        }
        os.flush();
        if (!os) throw CheckpointError(CheckpointErrorKind::io, "failed writing checkpoint: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError(CheckpointErrorKind::io, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError(CheckpointErrorKind::io, "cannot open checkpoint: " + path);
    Reader r(is, path);
    char magic[5];
    is.read(magic, 5);
    if (is.gcount() != 5 || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
        throw CheckpointError(CheckpointErrorKind::bad_magic, "not a checkpoint (bad magic): " + path);
    }
    const std::size_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointErrorKind::version, "unsupported checkpoint version " +
                                                                std::to_string(version) + " in " + path);
    }
    Checkpoint ck;
    ck.config = read_config(r);
    const std::size_t count = r.u32("parameter count");
    for (std::size_t i = 0; i < count; ++i) {
        std::string name = r.str("parameter name");
        Tensor<float> t = r.tensor(name);
        ck.params.emplace_back(std::move(name), std::move(t));
    }
    if (r.u8("optimizer flag")) {
        AdamState<float> opt;
        opt.step = r.u64("optimizer step");
        for (const auto& [name, t] : ck.params) {
            opt.m.push_back(r.tensor(name + " (adam m)"));
            opt.v.push_back(r.tensor(name + " (adam v)"));
        }
        ck.optimizer = std::move(opt);
    }
    return ck;
}

template <typename T>
void load_into(const Checkpoint& ck, DehazeModel<T>& model) {
    const ModelConfig& mc = model.config();
    if (ck.config.terms != mc.terms) mismatch("terms", std::to_string(ck.config.terms), std::to_string(mc.terms));
    if (ck.config.single_unet != mc.single_unet) {
        mismatch("single_unet", std::to_string(ck.config.single_unet), std::to_string(mc.single_unet));
    }
    if (ck.config.identity_bottom != mc.identity_bottom) {
        mismatch("identity_bottom", std::to_string(ck.config.identity_bottom), std::to_string(mc.identity_bottom));
    }
    check_unet("bottom", ck.config.bottom, mc.bottom);
    check_unet("k_net", ck.config.k_net, mc.k_net);

    auto params = model.parameters();
    if (params.size() != ck.params.size()) {
        mismatch("parameter count", std::to_string(ck.params.size()), std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = ck.params[i];
        if (name != params[i].name) mismatch("parameter " + std::to_string(i), name, params[i].name);
        if (t.shape() != params[i].var.shape()) {
            mismatch("tensor " + name, shape_str(t.shape()), shape_str(params[i].var.shape()));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].var.mutable_value() = ck.params[i].second.template cast<T>();
    }
}

template <typename T>
DehazeModel<T> load_model(const std::string& path) {
    const Checkpoint ck = read_checkpoint(path);
    DehazeModel<T> model(ck.config);
    load_into(ck, model);
    return model;
}

template <typename T>
AdamState<T> load_optimizer(const Checkpoint& ck) {
    AdamState<T> out;
    if (!ck.optimizer) return out;
    out.step = ck.optimizer->step;
    for (const auto& m : ck.optimizer->m) out.m.push_back(m.template cast<T>());
    for (const auto& v : ck.optimizer->v) out.v.push_back(v.template cast<T>());
    return out;
}

#define LPDH_INSTANTIATE(T)                                                                             \
    template void save_checkpoint(const std::string&, const DehazeModel<T>&, const AdamState<T>*);      \
    template void load_into(const Checkpoint&, DehazeModel<T>&);                                        \
    template DehazeModel<T> load_model(const std::string&);                                             \
    template AdamState<T> load_optimizer(const Checkpoint&);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
