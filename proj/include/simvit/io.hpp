#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include "simvit/model.hpp"

namespace simvit {

// Weight file layout, all integers little-endian:
//   "SIMVIT01"                       8 bytes
//   u32 tensor count
//   per tensor, in parameter registration order:
//     u16 name length, UTF-8 name
//     u8 rank, rank x u32 extents
//     u8 dtype (0 = f32, 1 = f64)
//     raw little-endian values
inline constexpr std::string_view kWeightMagic = "SIMVIT01";

class WeightFileError : public std::runtime_error {
   public:
    enum class Kind { io, bad_magic, truncated, bad_dtype, duplicate_name, name_mismatch, shape_mismatch,
                      dtype_mismatch, count_mismatch };

    WeightFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

   private:
    Kind kind_;
};

template <Real T>
void write_weights(const Model<T>& model, std::ostream& out);

// Builds a zero model for `config` and fills it from the stream; the file
// must list exactly the config's parameters, in order, with equal shapes
// and dtype.
template <Real T>
Model<T> read_weights(std::istream& in, const ModelConfig& config);

template <Real T>
void save_weights(const Model<T>& model, const std::filesystem::path& path);

template <Real T>
Model<T> load_weights(const std::filesystem::path& path, const ModelConfig& config);

class FormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Binary P6 with maxval 255. Bytes scale to [0, 1], then (v - 0.5) / 0.5.
template <Real T>
Tensor<T> decode_ppm(std::string_view bytes);

template <Real T>
Tensor<T> read_ppm(const std::filesystem::path& path);

// Model selection plus the ablation knobs, parsed from `key = value` lines:
//
//   variant      = micro           preset to start from
//   num_classes  = 1000
//   seed         = 0
//   depths       = 2-2-2-2          per-stage block counts ('-' or ',')
//   window       = 5,2,1            k,p,s for every central stage
//   window_sizes = 5-5-5            per central stage k, with p = k/2, s = 1
//   pos_embed    = true
//   image_size   = 224
//   stage        = P C N E L central|global [k p s]
//
// `stage` lines, when present, replace the preset's stage table. Blank lines
// and `#` comments are ignored.
struct RunConfig {
    ModelConfig model;
    std::uint64_t seed = 0;
};

class ConfigError : public ValidationError {
   public:
    ConfigError(std::size_t line, const std::string& field, const std::string& msg);
    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

   private:
    std::size_t line_;
    std::string field_;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies one `key = value` setting (line 0 = command line).
void apply_run_setting(RunConfig& config, const std::string& key, const std::string& value, std::size_t line = 0);

}  // namespace simvit
