#include "s2fpn/io.hpp"

#include "s2fpn/errors.hpp"
#include "s2fpn/icomesh.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace s2fpn {

using nlohmann::json;

namespace {

constexpr char kTensorMagic[4] = {'S', '2', 'T', 'N'};
constexpr char kSparseMagic[4] = {'S', '2', 'S', 'P'};

class Writer {
public:
    void magic(const char (&m)[4]) { out_.insert(out_.end(), m, m + 4); }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n)
    {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    void magic(const char (&m)[4], const char* what)
    {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
            throw IoError(std::string("not a ") + what + " (bad magic)");
        }
        pos_ += 4;
    }
    std::uint8_t u8()
    {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::span<const std::uint8_t> raw(std::uint64_t n)
    {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::uint64_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::uint64_t n) const
    {
        if (n > bytes_.size() - pos_) throw IoError("truncated container");
    }
    std::uint64_t get(int n)
    {
        need(static_cast<std::uint64_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += n;
        return v;
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, std::size_t n)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t checked_product(const std::vector<std::uint64_t>& dims)
{
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) {
        if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
            throw IoError("tensor dimensions overflow");
        }
        n *= d;
    }
    return n;
}

} // namespace

std::size_t dtype_size(DType t)
{
    switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
    case DType::u8: return 1;
    }
    throw IoError("unknown dtype code " + std::to_string(static_cast<int>(t)));
}

std::uint64_t TensorEntry::element_count() const { return checked_product(dims); }

TensorEntry TensorEntry::f64(std::string name, std::vector<std::uint64_t> dims, std::span<const double> v)
{
    TensorEntry e{std::move(name), DType::f64, std::move(dims), {}};
    if (e.element_count() != v.size()) throw ShapeError("tensor '" + e.name + "' dims/payload mismatch");
    e.bytes.reserve(8 * v.size());
    for (double x : v) put_le(e.bytes, std::bit_cast<std::uint64_t>(x), 8);
    return e;
}

TensorEntry TensorEntry::f32(std::string name, std::vector<std::uint64_t> dims, std::span<const double> v)
{
    TensorEntry e{std::move(name), DType::f32, std::move(dims), {}};
    if (e.element_count() != v.size()) throw ShapeError("tensor '" + e.name + "' dims/payload mismatch");
    e.bytes.reserve(4 * v.size());
    for (double x : v) put_le(e.bytes, std::bit_cast<std::uint32_t>(static_cast<float>(x)), 4);
    return e;
}

TensorEntry TensorEntry::i64(std::string name, std::vector<std::uint64_t> dims,
                             std::span<const std::int64_t> v)
{
    TensorEntry e{std::move(name), DType::i64, std::move(dims), {}};
    if (e.element_count() != v.size()) throw ShapeError("tensor '" + e.name + "' dims/payload mismatch");
    e.bytes.reserve(8 * v.size());
    for (std::int64_t x : v) put_le(e.bytes, static_cast<std::uint64_t>(x), 8);
    return e;
}

TensorEntry TensorEntry::text(std::string name, const std::string& s)
{
    TensorEntry e{std::move(name), DType::u8, {s.size()}, {}};
    e.bytes.assign(s.begin(), s.end());
    return e;
}

std::vector<double> TensorEntry::to_f64() const
{
    const std::uint64_t n = element_count();
    std::vector<double> out(n);
    const std::uint8_t* p = bytes.data();
    for (std::uint64_t i = 0; i < n; ++i) {
        switch (dtype) {
        case DType::f32:
            out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p + 4 * i, 4)));
            break;
        case DType::f64: out[i] = std::bit_cast<double>(get_le(p + 8 * i, 8)); break;
        case DType::i64: out[i] = static_cast<double>(static_cast<std::int64_t>(get_le(p + 8 * i, 8))); break;
        case DType::u8: out[i] = p[i]; break;
        }
    }
    return out;
}

std::vector<std::int64_t> TensorEntry::to_i64() const
{
    const std::uint64_t n = element_count();
    std::vector<std::int64_t> out(n);
    if (dtype == DType::i64) {
        for (std::uint64_t i = 0; i < n; ++i) out[i] = static_cast<std::int64_t>(get_le(bytes.data() + 8 * i, 8));
    } else if (dtype == DType::u8) {
        for (std::uint64_t i = 0; i < n; ++i) out[i] = bytes[i];
    } else {
        throw IoError("tensor '" + name + "' is not an integer tensor");
    }
    return out;
}

std::string TensorEntry::to_text() const
{
    if (dtype != DType::u8) throw IoError("tensor '" + name + "' is not a byte tensor");
    return {bytes.begin(), bytes.end()};
}

void TensorContainer::add(TensorEntry entry)
{
    if (find(entry.name)) throw InputError("duplicate tensor name '" + entry.name + "'");
    if (entry.bytes.size() != entry.element_count() * dtype_size(entry.dtype)) {
        throw ShapeError("tensor '" + entry.name + "' payload does not match its dims");
    }
    entries_.push_back(std::move(entry));
}

const TensorEntry* TensorContainer::find(const std::string& name) const
{
    for (const TensorEntry& e : entries_) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const TensorEntry& TensorContainer::at(const std::string& name) const
{
    const TensorEntry* e = find(name);
    if (!e) throw IoError("container has no entry '" + name + "'");
    return *e;
}

std::vector<std::uint8_t> encode(const TensorContainer& c)
{
    Writer w;
    w.magic(kTensorMagic);
    w.u32(kTensorContainerVersion);
    w.u64(c.entries().size());
    for (const TensorEntry& e : c.entries()) {
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.raw({reinterpret_cast<const std::uint8_t*>(e.name.data()), e.name.size()});
        w.u8(static_cast<std::uint8_t>(e.dtype));
        w.u32(static_cast<std::uint32_t>(e.dims.size()));
        for (std::uint64_t d : e.dims) w.u64(d);
        w.raw(e.bytes);
    }
    return w.take();
}

TensorContainer decode_tensor_container(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    r.magic(kTensorMagic, "tensor container");
    const std::uint32_t version = r.u32();
    if (version != kTensorContainerVersion) {
        throw IoError("unsupported tensor container version " + std::to_string(version));
    }
    const std::uint64_t count = r.u64();
    TensorContainer c;
    for (std::uint64_t i = 0; i < count; ++i) {
        TensorEntry e;
        const std::uint32_t name_len = r.u32();
        auto name = r.raw(name_len);
        e.name.assign(name.begin(), name.end());
        const std::uint8_t code = r.u8();
        if (code < 1 || code > 4) throw IoError("unknown dtype code " + std::to_string(code));
        e.dtype = static_cast<DType>(code);
        const std::uint32_t ndim = r.u32();
        for (std::uint32_t d = 0; d < ndim; ++d) e.dims.push_back(r.u64());
        const std::uint64_t payload = checked_product(e.dims) * dtype_size(e.dtype);
        if (payload > r.remaining()) throw IoError("tensor '" + e.name + "' payload truncated");
        auto data = r.raw(payload);
        e.bytes.assign(data.begin(), data.end());
        c.add(std::move(e));
    }
    if (!r.done()) throw IoError("trailing bytes after tensor container");
    return c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void write_tensor_container(const TensorContainer& c, const std::filesystem::path& path)
{
    write_file(path, encode(c));
}

TensorContainer read_tensor_container(const std::filesystem::path& path)
{
    return decode_tensor_container(read_file(path));
}

std::vector<std::uint8_t> encode(const SparseOperator& op)
{
    Writer w;
    w.magic(kSparseMagic);
    w.u32(kSparseContainerVersion);
    w.u64(op.rows());
    w.u64(op.cols());
    w.u64(op.nnz());
    for (std::uint64_t v : op.row_offsets()) w.u64(v);
    for (std::uint64_t v : op.col_indices()) w.u64(v);
    for (double v : op.values()) w.f64(v);
    return w.take();
}

SparseOperator decode_sparse_container(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    r.magic(kSparseMagic, "sparse container");
    const std::uint32_t version = r.u32();
    if (version != kSparseContainerVersion) {
        throw IoError("unsupported sparse container version " + std::to_string(version));
    }
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    const std::uint64_t nnz = r.u64();
    if (r.remaining() != 8 * (rows + 1) + 16 * nnz) throw IoError("sparse container size mismatch");
    std::vector<std::uint64_t> offsets(rows + 1), indices(nnz);
    std::vector<double> values(nnz);
    for (auto& v : offsets) v = r.u64();
    for (auto& v : indices) v = r.u64();
    for (auto& v : values) v = r.f64();
    try {
        return SparseOperator(rows, cols, std::move(offsets), std::move(indices), std::move(values));
    } catch (const AssemblyError& e) {
        throw IoError(std::string("sparse container violates CSR invariants: ") + e.what());
    }
}

void write_sparse_container(const SparseOperator& op, const std::filesystem::path& path)
{
    write_file(path, encode(op));
}

SparseOperator read_sparse_container(const std::filesystem::path& path)
{
    return decode_sparse_container(read_file(path));
}

// -------------------------------------------------------------------- JSON

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what)
{
    if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(std::string(what) + ": unknown field '" + key + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

json nan_to_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

} // namespace

json to_json(const ResampleSpec& r)
{
    return {{"down_mode", std::string(to_string(r.down_mode))},
            {"up_mode", std::string(to_string(r.up_mode))},
            {"swapped", r.swapped}};
}

ResampleSpec resample_from_json(const json& j, const ResampleSpec& defaults)
{
    reject_unknown(j, {"down_mode", "up_mode", "swapped"}, "resample");
    ResampleSpec r = defaults;
    std::string s;
    if (j.contains("down_mode")) {
        read_field(j, "down_mode", s);
        r.down_mode = parse_down_mode(s);
    }
    if (j.contains("up_mode")) {
        read_field(j, "up_mode", s);
        r.up_mode = parse_up_mode(s);
    }
    read_field(j, "swapped", r.swapped);
    return r;
}

json to_json(const ModelSpec& s)
{
    return {{"min_level", s.min_level},
            {"max_level", s.max_level},
            {"in_channels", s.in_channels},
            {"n_classes", s.n_classes},
            {"base_channels", s.base_channels},
            {"channel_cap", s.channel_cap},
            {"pyramid_channels", s.pyramid_channels},
            {"head_channels", s.head_channels},
            {"width_divisor", s.width_divisor},
            {"resample", to_json(s.resample)},
            {"post_merge_conv", s.post_merge_conv},
            {"head_stage", s.head_stage == HeadStage::resblock ? "resblock" : "meshconv"},
            {"stencil_units", s.stencil_units == StencilUnits::mesh ? "mesh" : "raw"},
            {"init_seed", s.init_seed}};
}

ModelSpec model_spec_from_json(const json& j, const ModelSpec& defaults)
{
    reject_unknown(j,
                   {"min_level", "max_level", "in_channels", "n_classes", "base_channels", "channel_cap",
                    "pyramid_channels", "head_channels", "width_divisor", "resample", "post_merge_conv",
                    "head_stage", "stencil_units", "init_seed"},
                   "model");
    ModelSpec s = defaults;
    read_field(j, "min_level", s.min_level);
    read_field(j, "max_level", s.max_level);
    read_field(j, "in_channels", s.in_channels);
    read_field(j, "n_classes", s.n_classes);
    read_field(j, "base_channels", s.base_channels);
    read_field(j, "channel_cap", s.channel_cap);
    read_field(j, "pyramid_channels", s.pyramid_channels);
    read_field(j, "head_channels", s.head_channels);
    read_field(j, "width_divisor", s.width_divisor);
    read_field(j, "post_merge_conv", s.post_merge_conv);
    read_field(j, "init_seed", s.init_seed);
    if (j.contains("resample")) s.resample = resample_from_json(j.at("resample"), s.resample);
    if (j.contains("head_stage")) {
        std::string h;
        read_field(j, "head_stage", h);
        if (h == "resblock") {
            s.head_stage = HeadStage::resblock;
        } else if (h == "meshconv") {
            s.head_stage = HeadStage::meshconv;
        } else {
            throw ConfigError("unknown head_stage '" + h + "'");
        }
    }
    if (j.contains("stencil_units")) {
        std::string u;
        read_field(j, "stencil_units", u);
        if (u == "mesh") {
            s.stencil_units = StencilUnits::mesh;
        } else if (u == "raw") {
            s.stencil_units = StencilUnits::raw;
        } else {
            throw ConfigError("unknown stencil_units '" + u + "'");
        }
    }
    return s;
}

json to_json(const TrainConfig& c)
{
    json j = {{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr0", c.lr0},
              {"decay_factor", c.decay_factor},
              {"decay_every", c.decay_every},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"class_weights", c.class_weights},
              {"seed", c.seed}};
    j["ignore_index"] = c.ignore_index ? json(*c.ignore_index) : json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults)
{
    reject_unknown(j,
                   {"epochs", "batch_size", "lr0", "decay_factor", "decay_every", "adam_beta1",
                    "adam_beta2", "adam_eps", "class_weights", "ignore_index", "seed"},
                   "train");
    TrainConfig c = defaults;
    read_field(j, "epochs", c.epochs);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "lr0", c.lr0);
    read_field(j, "decay_factor", c.decay_factor);
    read_field(j, "decay_every", c.decay_every);
    read_field(j, "adam_beta1", c.adam_beta1);
    read_field(j, "adam_beta2", c.adam_beta2);
    read_field(j, "adam_eps", c.adam_eps);
    read_field(j, "class_weights", c.class_weights);
    read_field(j, "seed", c.seed);
    if (j.contains("ignore_index")) {
        if (j.at("ignore_index").is_null()) {
            c.ignore_index.reset();
        } else {
            int v = 0;
            read_field(j, "ignore_index", v);
            c.ignore_index = v;
        }
    }
    return c;
}

json to_json(const MetricReport& r, const std::vector<std::string>& class_names)
{
    json iou = json::object();
    json iou_list = json::array();
    for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
        const std::string name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
        iou[name] = nan_to_null(r.per_class_iou[c]);
        iou_list.push_back({{"class", name}, {"iou", nan_to_null(r.per_class_iou[c])}});
    }
    return {{"pixel_accuracy", r.pixel_accuracy},
            {"miou", r.miou},
            {"mean_average_precision", r.mean_average_precision},
            {"per_class_iou", iou_list},
            {"confusion", r.confusion}};
}

json to_json(const EpochRecord& r)
{
    return {{"epoch", r.epoch},
            {"lr", r.lr},
            {"train_loss", r.train_loss},
            {"val_pixel_accuracy", r.val.pixel_accuracy},
            {"val_miou", r.val.miou},
            {"val_map", r.val.mean_average_precision}};
}

ExperimentConfig experiment_from_json(const json& j)
{
    reject_unknown(j, {"model", "train", "resample"}, "config");
    ExperimentConfig c;
    if (j.contains("model")) c.model = model_spec_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("resample")) c.model.resample = resample_from_json(j.at("resample"), c.model.resample);
    c.model.validate();
    c.train.validate();
    return c;
}

json to_json(const ExperimentConfig& c)
{
    json model = to_json(c.model);
    json resample = model.at("resample");
    model.erase("resample");
    return {{"model", model}, {"train", to_json(c.train)}, {"resample", resample}};
}

ExperimentConfig stanford_experiment(int min_level)
{
    ExperimentConfig c;
    c.model.min_level = min_level;
    c.model.in_channels = 4;
    c.model.n_classes = 13;
    c.train = stanford_train_config(min_level);
    return c;
}

ExperimentConfig desk_experiment()
{
    ExperimentConfig c;
    c.model.min_level = 3;
    c.model.max_level = 5;
    c.model.in_channels = 4;
    c.model.n_classes = 3;
    c.model.base_channels = 8;
    c.model.channel_cap = 512;
    c.model.pyramid_channels = 8;
    c.model.head_channels = 8;
    c.train.epochs = 50;
    c.train.batch_size = 8;
    c.train.lr0 = 0.01;
    c.train.decay_factor = 0.9;
    c.train.decay_every = 20;
    return c;
}

// -------------------------------------------------------------- checkpoints

void save_checkpoint(const Model& model, const std::filesystem::path& path, DType dtype)
{
    if (dtype != DType::f64 && dtype != DType::f32) throw InputError("checkpoints store f32 or f64");
    TensorContainer c;
    json layers = json::array();
    for (const Parameter* p : model.parameters()) {
        std::vector<std::uint64_t> dims(p->shape().begin(), p->shape().end());
        layers.push_back({{"name", p->name()}, {"shape", p->shape()}, {"trainable", p->trainable()}});
        c.add(dtype == DType::f64 ? TensorEntry::f64(p->name(), dims, p->value())
                                  : TensorEntry::f32(p->name(), dims, p->value()));
    }
    const json manifest = {{"model_spec", to_json(model.spec())}, {"layers", layers}};
    c.add(TensorEntry::text("__manifest__", manifest.dump()));
    write_tensor_container(c, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    const TensorContainer c = read_tensor_container(path);
    json manifest;
    try {
        manifest = json::parse(c.at("__manifest__").to_text());
    } catch (const json::exception& e) {
        throw IoError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
    }
    Checkpoint ck;
    ck.spec = model_spec_from_json(manifest.at("model_spec"));
    for (const auto& layer : manifest.at("layers")) {
        const auto name = layer.at("name").get<std::string>();
        ck.state.names.push_back(name);
        ck.state.values.push_back(c.at(name).to_f64());
    }
    return ck;
}

TensorContainer mesh_container(const IcoMesh& mesh)
{
    std::vector<double> xyz;
    for (const Vec3& v : mesh.vertices()) xyz.insert(xyz.end(), {v.x(), v.y(), v.z()});
    std::vector<std::int64_t> faces;
    for (const Face& f : mesh.faces()) faces.insert(faces.end(), {f[0], f[1], f[2]});
    std::vector<std::int64_t> parents;
    for (const Edge& e : mesh.parent_edges()) parents.insert(parents.end(), {e[0], e[1]});
    TensorContainer c;
    c.add(TensorEntry::f64("vertices", {mesh.num_vertices(), 3}, xyz));
    c.add(TensorEntry::i64("faces", {mesh.num_faces(), 3}, faces));
    c.add(TensorEntry::i64("parent_edges", {mesh.num_vertices(), 2}, parents));
    return c;
}

// ---------------------------------------------------------------- manifests

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const
{
    return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest read_manifest(const std::filesystem::path& path)
{
    json j;
    try {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open manifest " + path.string());
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + path.string() + ": " + e.what());
    }
    reject_unknown(j,
                   {"schema_version", "level", "n_classes", "channel_names", "class_names", "splits",
                    "class_weights"},
                   "manifest");
    DatasetManifest m;
    m.base_dir = path.parent_path();
    read_field(j, "schema_version", m.schema_version);
    if (m.schema_version != 1) throw ConfigError("unsupported manifest schema " + std::to_string(m.schema_version));
    if (!j.contains("level") || !j.contains("n_classes") || !j.contains("splits")) {
        throw ConfigError("manifest requires level, n_classes and splits");
    }
    read_field(j, "level", m.level);
    read_field(j, "n_classes", m.n_classes);
    read_field(j, "channel_names", m.channel_names);
    read_field(j, "class_names", m.class_names);
    read_field(j, "class_weights", m.class_weights);
    if (m.level < 0 || m.level > kMaxMeshLevel) throw ConfigError("manifest level out of range");
    if (m.n_classes < 2) throw ConfigError("manifest needs at least two classes");
    if (!m.class_names.empty() && m.class_names.size() != static_cast<std::size_t>(m.n_classes)) {
        throw ConfigError("class_names must list n_classes entries");
    }
    if (!m.class_weights.empty() && m.class_weights.size() != static_cast<std::size_t>(m.n_classes)) {
        throw ConfigError("class_weights must list n_classes entries");
    }
    for (const auto& [split, files] : j.at("splits").items()) {
        auto& list = m.splits[split];
        for (const auto& f : files) {
            const std::filesystem::path p = f.get<std::string>();
            if (!std::filesystem::exists(m.resolve(p))) {
                throw ConfigError("manifest references missing file " + m.resolve(p).string());
            }
            list.push_back(p);
        }
    }
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path)
{
    json splits = json::object();
    for (const auto& [split, files] : m.splits) {
        json list = json::array();
        for (const auto& f : files) list.push_back(f.generic_string());
        splits[split] = list;
    }
    json j = {{"schema_version", m.schema_version},
              {"level", m.level},
              {"n_classes", m.n_classes},
              {"channel_names", m.channel_names},
              {"class_names", m.class_names},
              {"splits", splits}};
    if (!m.class_weights.empty()) j["class_weights"] = m.class_weights;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << j.dump(2) << "\n";
}

Dataset load_split(const DatasetManifest& m, const std::string& split)
{
    auto it = m.splits.find(split);
    if (it == m.splits.end()) throw ConfigError("manifest has no split '" + split + "'");
    Dataset data;
    data.level = m.level;
    data.n_classes = m.n_classes;
    data.in_channels = m.channel_names.empty() ? -1 : static_cast<int>(m.channel_names.size());
    const std::size_t n = vertex_count(m.level);
    for (const auto& rel : it->second) {
        const auto path = m.resolve(rel);
        const TensorContainer c = read_tensor_container(path);
        const TensorEntry& input = c.at("input");
        const TensorEntry& labels = c.at("labels");
        if (input.dims.size() != 2 || input.dims[1] != n) {
            throw ConfigError(path.string() + ": input vertex count does not match level " +
                              std::to_string(m.level) + " (" + std::to_string(n) + " vertices)");
        }
        if (labels.dims.size() != 1 || labels.dims[0] != n) {
            throw ConfigError(path.string() + ": label count does not match level " + std::to_string(m.level));
        }
        const int channels = static_cast<int>(input.dims[0]);
        if (data.in_channels < 0) data.in_channels = channels;
        if (channels != data.in_channels) throw ConfigError(path.string() + ": channel count mismatch");
        Sample s{MeshSignal(m.level, 1, static_cast<std::size_t>(channels)), {}};
        s.input.values() = input.to_f64();
        for (std::int64_t y : labels.to_i64()) s.labels.push_back(static_cast<int>(y));
        data.samples.push_back(std::move(s));
    }
    if (data.in_channels < 0) data.in_channels = 0;
    return data;
}

std::vector<std::filesystem::path> write_samples(const Dataset& data, const std::filesystem::path& dir,
                                                 const std::string& prefix)
{
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const Sample& s = data.samples[i];
        TensorContainer c;
        c.add(TensorEntry::f64("input", {s.input.channels(), s.input.num_vertices()}, s.input.values()));
        std::vector<std::int64_t> labels(s.labels.begin(), s.labels.end());
        c.add(TensorEntry::i64("labels", {labels.size()}, labels));
        const std::filesystem::path rel = prefix + "_" + std::to_string(i) + ".s2tn";
        write_tensor_container(c, dir / rel);
        out.push_back(rel);
    }
    return out;
}

const std::vector<std::string>& stanford_class_names()
{
    static const std::vector<std::string> names = {"beam",  "board", "bookcase", "ceiling", "chair",
                                                   "clutter", "column", "door", "floor",   "sofa",
                                                   "table", "wall",  "window"};
    return names;
}

} // namespace s2fpn
