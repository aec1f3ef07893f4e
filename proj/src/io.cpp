#include "simvit/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <vector>

namespace simvit {

namespace {

using Kind = WeightFileError::Kind;

void put_le(std::ostream& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
   public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::uint64_t le(int bytes, const char* what) {
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= std::uint64_t(byte(what)) << (8 * i);
        return v;
    }

    std::string bytes(std::size_t n, const char* what) {
        std::string s(n, '\0');
        if (n && !in_.read(s.data(), static_cast<std::streamsize>(n))) truncated(what);
        return s;
    }

   private:
    unsigned char byte(const char* what) {
        const int c = in_.get();
        if (c == std::char_traits<char>::eof()) truncated(what);
        return static_cast<unsigned char>(c);
    }

    [[noreturn]] void truncated(const char* what) {
        throw WeightFileError(Kind::truncated, std::string("weight file truncated while reading ") + what);
    }

    std::istream& in_;
};

struct FileTensor {
    std::string name;
    Shape shape;
    DType dtype;
    std::string raw;
};

template <Real T>
void decode_values(const std::string& raw, Tensor<T>& dst) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(dst.ptr(), raw.data(), dst.size() * sizeof(T));
        return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        Bits b = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k)
            b |= Bits(static_cast<unsigned char>(raw[i * sizeof(T) + k])) << (8 * k);
        dst[i] = std::bit_cast<T>(b);
    }
}

std::string trim(std::string_view s) {
    auto first = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto last = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
    return first < last ? std::string(first, last) : std::string();
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : value) {
        if (c == ',' || c == '-' || std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

template <Real T>
void write_weights(const Model<T>& model, std::ostream& out) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const auto params = model.parameters();
    out.write(kWeightMagic.data(), static_cast<std::streamsize>(kWeightMagic.size()));
    put_le(out, params.size(), 4);
    for (const Parameter<T>* p : params) {
        put_le(out, p->name.size(), 2);
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_le(out, p->value.rank(), 1);
        for (std::size_t d : p->value.shape()) put_le(out, d, 4);
        put_le(out, static_cast<std::uint8_t>(dtype_of<T>()), 1);
        std::string raw(p->value.size() * sizeof(T), '\0');
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(raw.data(), p->value.ptr(), raw.size());
        } else {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const Bits b = std::bit_cast<Bits>(p->value[i]);
                for (std::size_t k = 0; k < sizeof(T); ++k) raw[i * sizeof(T) + k] = static_cast<char>((b >> (8 * k)) & 0xFF);
            }
        }
        out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    }
    if (!out) throw WeightFileError(Kind::io, "failed writing weight stream");
}

template <Real T>
Model<T> read_weights(std::istream& in, const ModelConfig& config) {
    Reader r(in);
    if (r.bytes(kWeightMagic.size(), "magic") != kWeightMagic) {
        throw WeightFileError(Kind::bad_magic, "not a weight file (bad magic)");
    }
    const std::size_t count = r.le(4, "tensor count");
    std::vector<FileTensor> tensors;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < count; ++i) {
        FileTensor t;
        t.name = r.bytes(r.le(2, "name length"), "name");
        if (!seen.insert(t.name).second) {
            throw WeightFileError(Kind::duplicate_name, "duplicate tensor name '" + t.name + "'");
        }
        const std::size_t rank = r.le(1, "rank");
        for (std::size_t d = 0; d < rank; ++d) t.shape.push_back(r.le(4, "extent"));
        const auto tag = r.le(1, "dtype");
        if (tag > 1) throw WeightFileError(Kind::bad_dtype, "tensor '" + t.name + "' has unknown dtype tag " + std::to_string(tag));
        t.dtype = static_cast<DType>(tag);
        const std::size_t width = t.dtype == DType::f32 ? 4 : 8;
        t.raw = r.bytes(shape_size(t.shape) * width, "tensor values");
        tensors.push_back(std::move(t));
    }

    Model<T> model(config);
    const auto params = model.parameters();
    for (std::size_t i = 0; i < std::min(params.size(), tensors.size()); ++i) {
        const FileTensor& t = tensors[i];
        Parameter<T>& p = *params[i];
        if (t.name != p.name) {
            throw WeightFileError(Kind::name_mismatch, "tensor " + std::to_string(i) + " is '" + t.name +
                                                           "' in the file but '" + p.name + "' in the model");
        }
        if (t.shape != p.shape()) {
            throw WeightFileError(Kind::shape_mismatch, "shape mismatch for '" + t.name + "': file " +
                                                            shape_string(t.shape) + ", model " +
                                                            shape_string(p.shape()));
        }
        if (t.dtype != dtype_of<T>()) {
            throw WeightFileError(Kind::dtype_mismatch, "tensor '" + t.name + "' is " + dtype_name(t.dtype) +
                                                            ", model is " + dtype_name(dtype_of<T>()));
        }
        decode_values(t.raw, p.value);
    }
    if (params.size() != tensors.size()) {
        throw WeightFileError(Kind::count_mismatch, "file has " + std::to_string(tensors.size()) +
                                                        " tensors, model expects " + std::to_string(params.size()));
    }
    return model;
}

template <Real T>
void save_weights(const Model<T>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WeightFileError(Kind::io, "cannot open " + path.string() + " for writing");
    write_weights(model, out);
}

template <Real T>
Model<T> load_weights(const std::filesystem::path& path, const ModelConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightFileError(Kind::io, "cannot open " + path.string());
    return read_weights<T>(in, config);
}

template <Real T>
Tensor<T> decode_ppm(std::string_view bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6) image");
    pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&](const char* field) {
        skip_space();
        std::size_t v = 0;
        auto [end, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
        if (ec != std::errc() || end == bytes.data() + pos) throw FormatError(std::string("PPM header: bad ") + field);
        pos = static_cast<std::size_t>(end - bytes.data());
        return v;
    };
    const std::size_t width = number("width");
    const std::size_t height = number("height");
    const std::size_t maxval = number("maxval");
    if (width == 0 || height == 0) throw FormatError("PPM header: empty image");
    if (maxval != 255) throw FormatError("PPM header: maxval must be 255, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw FormatError("PPM header: missing separator before pixel data");
    }
    ++pos;
    const std::size_t need = width * height * 3;
    if (bytes.size() - pos < need) {
        throw FormatError("PPM pixel data short: expected " + std::to_string(need) + " bytes, got " +
                          std::to_string(bytes.size() - pos));
    }
    Tensor<T> img({height, width, 3});
    for (std::size_t i = 0; i < need; ++i) {
        const T v = T(static_cast<unsigned char>(bytes[pos + i])) / T(255);
        img[i] = (v - T(0.5)) / T(0.5);
    }
    return img;
}

template <Real T>
Tensor<T> read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ppm<T>(bytes);
}

ConfigError::ConfigError(std::size_t line, const std::string& field, const std::string& msg)
    : ValidationError((line ? "line " + std::to_string(line) + ": " : std::string()) + "field '" + field + "': " + msg),
      line_(line),
      field_(field) {}

namespace {

std::size_t parse_count(const std::string& text, std::size_t line, const std::string& field) {
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size()) {
        throw ConfigError(line, field, "expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& text, std::size_t line, const std::string& field) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError(line, field, "expected true or false, got '" + text + "'");
}

std::size_t central_stage_count(const ModelConfig& m) {
    return static_cast<std::size_t>(std::count_if(m.stages.begin(), m.stages.end(), [](const StageConfig& s) {
        return s.attn == AttentionKind::central;
    }));
}

}  // namespace

void apply_run_setting(RunConfig& config, const std::string& key, const std::string& value, std::size_t line) {
    ModelConfig& m = config.model;
    if (key == "variant") {
        try {
            const std::size_t classes = m.num_classes;
            m = preset_config(value, classes);
        } catch (const ValidationError& e) {
            throw ConfigError(line, key, e.what());
        }
    } else if (key == "num_classes") {
        m.num_classes = parse_count(value, line, key);
    } else if (key == "seed") {
        config.seed = parse_count(value, line, key);
    } else if (key == "depths") {
        const auto parts = split_list(value);
        if (parts.size() != m.stages.size()) {
            throw ConfigError(line, key, "expected " + std::to_string(m.stages.size()) + " depths, got " +
                                             std::to_string(parts.size()));
        }
        for (std::size_t i = 0; i < parts.size(); ++i) m.stages[i].depth = parse_count(parts[i], line, key);
    } else if (key == "window") {
        const auto parts = split_list(value);
        if (parts.size() != 3) throw ConfigError(line, key, "expected k,p,s");
        const WindowSpec w{parse_count(parts[0], line, key), parse_count(parts[1], line, key),
                           parse_count(parts[2], line, key)};
        for (auto& s : m.stages)
            if (s.attn == AttentionKind::central) s.window = w;
    } else if (key == "window_sizes") {
        const auto parts = split_list(value);
        if (parts.size() != central_stage_count(m)) {
            throw ConfigError(line, key, "expected " + std::to_string(central_stage_count(m)) +
                                             " sizes (one per central stage), got " + std::to_string(parts.size()));
        }
        std::size_t i = 0;
        for (auto& s : m.stages) {
            if (s.attn != AttentionKind::central) continue;
            const std::size_t k = parse_count(parts[i++], line, key);
            if (k % 2 == 0) throw ConfigError(line, key, "window sizes must be odd, got " + std::to_string(k));
            s.window = WindowSpec{k, k / 2, 1};
        }
    } else if (key == "pos_embed") {
        m.pos_embed = parse_bool(value, line, key);
    } else if (key == "image_size") {
        m.image_size = parse_count(value, line, key);
    } else if (key == "stage") {
        std::istringstream fields(value);
        std::vector<std::string> parts{std::istream_iterator<std::string>(fields), std::istream_iterator<std::string>()};
        if (parts.size() != 6 && parts.size() != 9) {
            throw ConfigError(line, key, "expected 'P C N E L central|global [k p s]'");
        }
        StageConfig s;
        s.patch = parse_count(parts[0], line, key);
        s.channels = parse_count(parts[1], line, key);
        s.heads = parse_count(parts[2], line, key);
        s.expansion = parse_count(parts[3], line, key);
        s.depth = parse_count(parts[4], line, key);
        if (parts[5] == "central") {
            s.attn = AttentionKind::central;
        } else if (parts[5] == "global") {
            s.attn = AttentionKind::global;
        } else {
            throw ConfigError(line, key, "attention kind must be central or global, got '" + parts[5] + "'");
        }
        if (parts.size() == 9) {
            s.window = {parse_count(parts[6], line, key), parse_count(parts[7], line, key),
                        parse_count(parts[8], line, key)};
        }
        m.stages.push_back(s);
    } else {
        throw ConfigError(line, key, "unknown setting");
    }
}

RunConfig parse_run_config(std::istream& in) {
    struct Setting {
        std::size_t line;
        std::string key, value;
    };
    std::vector<Setting> settings;
    std::string text;
    for (std::size_t line = 1; std::getline(in, text); ++line) {
        if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
        const std::string body = trim(text);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError(line, body, "expected 'key = value'");
        settings.push_back({line, trim(body.substr(0, eq)), trim(body.substr(eq + 1))});
    }

    RunConfig cfg;
    cfg.model.stages.clear();
    // the base table first (preset, then explicit stages), then the overrides
    bool have_base = false;
    for (const auto& s : settings) {
        if (s.key != "variant") continue;
        apply_run_setting(cfg, s.key, s.value, s.line);
        have_base = true;
    }
    bool explicit_stages = false;
    for (const auto& s : settings) {
        if (s.key != "stage") continue;
        if (!explicit_stages) {
            cfg.model.stages.clear();
            cfg.model.variant = "custom";
        }
        explicit_stages = true;
        apply_run_setting(cfg, s.key, s.value, s.line);
        have_base = true;
    }
    if (!have_base) throw ConfigError(0, "variant", "config needs a variant or stage lines");
    for (const auto& s : settings) {
        if (s.key == "variant" || s.key == "stage") continue;
        apply_run_setting(cfg, s.key, s.value, s.line);
    }
    try {
        cfg.model.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const ValidationError& e) {
        throw ConfigError(0, "model", e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "path", "cannot open " + path.string());
    return parse_run_config(in);
}

#define SIMVIT_INSTANTIATE(T)                                                        \
    template void write_weights(const Model<T>&, std::ostream&);                     \
    template Model<T> read_weights(std::istream&, const ModelConfig&);               \
    template void save_weights(const Model<T>&, const std::filesystem::path&);       \
    template Model<T> load_weights(const std::filesystem::path&, const ModelConfig&); \
    template Tensor<T> decode_ppm(std::string_view);                                 \
    template Tensor<T> read_ppm(const std::filesystem::path&);

SIMVIT_INSTANTIATE(float)
SIMVIT_INSTANTIATE(double)

}  // namespace simvit
