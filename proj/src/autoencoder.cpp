#include "gapnet/autoencoder.hpp"

#include <cstdio>

namespace gapnet {

void AutoencoderConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("autoencoder config: " + what); };
    if (n_outer < 1) fail("n_outer must be >= 1");
    if (n_reduce < 0 || n_reduce > 5) fail("n_reduce must lie in [0, 5]");
    if (n_inner < 0) fail("n_inner must be >= 0");
    if (depth() < 1 || depth() > 10) fail("n_outer + n_reduce + n_inner must lie in [1, 10]");
    if (d_ch < 1) fail("d_ch must be >= 1");
    if (n_days < 1) fail("n_days must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) fail("kernel must be odd");
    if (dropout_p < 0.0 || dropout_p >= 1.0) fail("dropout_p must lie in [0, 1)");
    if (width < 1 || height < 1) fail("width and height must be positive");
    const Index block = Index{1} << n_reduce;
    if (width % block != 0 || height % block != 0) {
        fail("width " + std::to_string(width) + " and height " + std::to_string(height) +
             " must be divisible by 2^n_reduce = " + std::to_string(block));
    }
    if (use_posenc && (width < 2 || height < 2)) fail("positional encoding needs width, height >= 2");
}

std::string AutoencoderConfig::label() const {
    return "o" + std::to_string(n_outer) + "r" + std::to_string(n_reduce) + "i" + std::to_string(n_inner);
}

AutoencoderConfig config_from_label(const std::string& label, AutoencoderConfig base) {
    long long o = -1, r = -1, i = -1;
    char tail = 0;
    if (std::sscanf(label.c_str(), "o%lldr%lldi%lld%c", &o, &r, &i, &tail) != 3) {
        throw ConfigError("bad architecture label '" + label + "', expected o<N>r<N>i<N>");
    }
    base.n_outer = o;
    base.n_reduce = r;
    base.n_inner = i;
    base.validate();
    return base;
}

std::vector<AutoencoderConfig> enumerate_configs(const AutoencoderConfig& base) {
    std::vector<AutoencoderConfig> out;
    for (Index sum = 1; sum <= 10; ++sum) {
        for (Index r = 0; r <= 5; ++r) {
            for (Index o = 1; o + r <= sum; ++o) {
                AutoencoderConfig c = base;
                c.n_outer = o;
                c.n_reduce = r;
                c.n_inner = sum - o - r;
                out.push_back(c);
            }
        }
    }
    return out;
}

Index param_count(const AutoencoderConfig& c) {
    const Index k2 = c.kernel * c.kernel;
    const Index d = c.d_ch;
    const Index first = c.input_channels() * k2 * d + d;
    const Index square = d * k2 * d + d;
    const Index bn = 2 * d;
    const Index last = d * k2 * 1 + 1;
    // Encoder first block + depth blocks each way + decoder mirror block, all with batchnorm.
    return (first + bn) + 2 * c.depth() * (square + bn) + (square + bn) + last;
}

}  // namespace gapnet
