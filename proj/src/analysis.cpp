#include "simvit/analysis.hpp"

#include <cstdio>
#include <sstream>

namespace simvit {

CostBreakdown& CostBreakdown::operator+=(const CostBreakdown& o) {
    embedding += o.embedding;
    attention += o.attention;
    ffn += o.ffn;
    norms += o.norms;
    head += o.head;
    return *this;
}

std::uint64_t CostReport::total_params() const { return params_breakdown().total(); }
std::uint64_t CostReport::total_macs() const { return macs_breakdown().total(); }

CostBreakdown CostReport::params_breakdown() const {
    CostBreakdown sum = head.params;
    for (const auto& s : stages) sum += s.params;
    return sum;
}

CostBreakdown CostReport::macs_breakdown() const {
    CostBreakdown sum = head.macs;
    for (const auto& s : stages) sum += s.macs;
    return sum;
}

namespace {

CostReport build_report(const ModelConfig& config, std::size_t height, std::size_t width, bool with_macs) {
    config.validate();
    using u64 = std::uint64_t;
    CostReport report;
    report.input_height = height;
    report.input_width = width;
    if (with_macs) {
        const std::size_t r = config.reduction();
        if (height == 0 || width == 0 || height % r != 0 || width % r != 0) {
            throw GeometryError("count_macs: " + std::to_string(height) + "x" + std::to_string(width) +
                                " input is not divisible by " + std::to_string(r));
        }
    }

    u64 in = config.in_channels;
    std::size_t h = height, w = width;
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
        const StageConfig& s = config.stages[i];
        const u64 c = s.channels, hidden = s.channels * s.expansion, patch_in = s.patch * s.patch * in;
        StageCost cost;
        if (with_macs) {
            h /= s.patch;
            w /= s.patch;
            cost.height = h;
            cost.width = w;
        }
        const u64 tokens = u64(h) * w;

        cost.params.embedding = patch_in * c + c;
        cost.params.norms = 2 * c;
        cost.macs.embedding = tokens * patch_in * c;
        if (i == 0 && config.pos_embed) {
            const u64 side = config.image_size / s.patch;
            cost.params.embedding += side * side * c;
        }

        const u64 keys = s.attn == AttentionKind::central ? u64(s.window.k) * s.window.k : tokens;
        const u64 block_attention_params = 4 * (c * c + c);
        const u64 block_ffn_params = (c * hidden + hidden) + (9 * hidden + hidden) + (hidden * c + c);
        const u64 block_attention_macs = tokens * (4 * c * c + 2 * keys * c);
        const u64 block_ffn_macs = tokens * (2 * c * hidden + 9 * hidden);
        cost.params.attention = s.depth * block_attention_params;
        cost.params.ffn = s.depth * block_ffn_params;
        cost.params.norms += s.depth * 4 * c;
        cost.macs.attention = s.depth * block_attention_macs;
        cost.macs.ffn = s.depth * block_ffn_macs;

        report.stages.push_back(cost);
        in = c;
    }
    report.head.params.norms = 2 * in;
    report.head.params.head = in * config.num_classes + config.num_classes;
    report.head.macs.head = in * config.num_classes;
    if (!with_macs) {
        for (auto& s : report.stages) s.macs = {};
        report.head.macs = {};
    }
    return report;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

CostReport count_params(const ModelConfig& config) { return build_report(config, 0, 0, false); }

CostReport count_macs(const ModelConfig& config, std::size_t height, std::size_t width) {
    return build_report(config, height, width, true);
}

std::string describe(const ModelConfig& config, std::size_t height, std::size_t width) {
    const CostReport report = count_macs(config, height, width);
    std::ostringstream os;
    os << "stage\tP\tC\tN\tE\tL\tattn\twindow\toutput\tparams\tmacs\tparams_M\tGMACs\n";
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
        const StageConfig& s = config.stages[i];
        const StageCost& cost = report.stages[i];
        const std::uint64_t p = cost.params.total(), m = cost.macs.total();
        os << (i + 1) << '\t' << s.patch << '\t' << s.channels << '\t' << s.heads << '\t' << s.expansion << '\t'
           << s.depth << '\t' << attention_kind_name(s.attn) << '\t';
        if (s.attn == AttentionKind::central) {
            os << s.window.k << '/' << s.window.p << '/' << s.window.s;
        } else {
            os << '-';
        }
        os << '\t' << cost.height << 'x' << cost.width << '\t' << p << '\t' << m << '\t' << fixed(p / 1e6, 3) << '\t'
           << fixed(m / 1e9, 3) << '\n';
    }
    const std::uint64_t hp = report.head.params.total(), hm = report.head.macs.total();
    os << "head\t-\t-\t-\t-\t-\t-\t-\t" << config.num_classes << '\t' << hp << '\t' << hm << '\t' << fixed(hp / 1e6, 3)
       << '\t' << fixed(hm / 1e9, 3) << '\n';
    const std::uint64_t tp = report.total_params(), tm = report.total_macs();
    os << "total\t-\t-\t-\t-\t-\t-\t-\t" << height << 'x' << width << '\t' << tp << '\t' << tm << '\t'
       << fixed(tp / 1e6, 3) << '\t' << fixed(tm / 1e9, 3) << '\n';
    return os.str();
}

}  // namespace simvit
