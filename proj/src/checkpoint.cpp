#include "claw/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace claw {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void put_f32(std::ostream& out, float v) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(buf, 4);
}

float get_f32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string config_to_text(const ModelConfig& config) {
    std::ostringstream out;
    out << "input_size=" << config.input_size << '\n'
        << "input_channels=" << config.input_channels << '\n'
        << "depth=" << config.depth << '\n'
        << "channels=";
    for (std::size_t i = 0; i < config.channels.size(); ++i) {
        if (i) out << ',';
        out << config.channels[i];
    }
    out << '\n'
        << "attention=" << (config.enable_attention ? 1 : 0) << '\n'
        << "residual=" << (config.enable_residual ? 1 : 0) << '\n'
        << "bottom_branch=" << (config.enable_bottom_branch ? 1 : 0) << '\n'
        << "shortcut_mode="
        << (config.shortcut_mode == ShortcutMode::zero_pad ? "zero_pad" : "projection") << '\n'
        << "pool_everywhere=" << (config.pool_everywhere ? 1 : 0) << '\n'
        << "threshold=" << format_double(config.threshold) << '\n'
        << "seed=" << config.seed << '\n';
    return out.str();
}

ModelConfig config_from_text(const std::string& text) {
    ModelConfig config;
    config.channels.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("checkpoint config: malformed line: " + line);
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "input_size") {
            config.input_size = std::stoll(value);
        } else if (key == "input_channels") {
            config.input_channels = std::stoll(value);
        } else if (key == "depth") {
            config.depth = std::stoll(value);
        } else if (key == "channels") {
            std::istringstream cs(value);
            std::string tok;
            while (std::getline(cs, tok, ',')) config.channels.push_back(std::stoll(tok));
        } else if (key == "attention") {
            config.enable_attention = value == "1";
        } else if (key == "residual") {
            config.enable_residual = value == "1";
        } else if (key == "bottom_branch") {
            config.enable_bottom_branch = value == "1";
        } else if (key == "shortcut_mode") {
            if (value == "zero_pad") {
                config.shortcut_mode = ShortcutMode::zero_pad;
            } else if (value == "projection") {
                config.shortcut_mode = ShortcutMode::projection;
            } else {
                throw std::runtime_error("checkpoint config: unknown shortcut_mode " + value);
            }
        } else if (key == "pool_everywhere") {
            config.pool_everywhere = value == "1";
        } else if (key == "threshold") {
            config.threshold = std::stod(value);
        } else if (key == "seed") {
            config.seed = std::stoull(value);
        } else {
            throw std::runtime_error("checkpoint config: unknown key " + key);
        }
    }
    config.validate();
    return config;
}

void save_checkpoint(const std::string& path, ClawNet<float>& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);

    const std::string config_text = config_to_text(net.config());
    put_u64(out, config_text.size());
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

    auto params = net.params();
    put_u64(out, params.size());
    for (const auto& p : params) {
        put_u64(out, p.name.size());
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u64(out, p.logical_extents.size());
        for (index_t e : p.logical_extents) put_u64(out, static_cast<std::uint64_t>(e));
        for (float v : p.value->data) put_f32(out, v);
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

namespace {

std::string read_header_config(std::istream& in, const std::string& path) {
    char magic[sizeof(kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const std::uint64_t len = get_u64(in);
    if (len > (std::uint64_t(1) << 20)) {
        throw std::runtime_error("checkpoint: implausible config size in " + path);
    }
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("checkpoint: truncated config in " + path);
    return text;
}

}  // namespace

ModelConfig peek_checkpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    return config_from_text(read_header_config(in, path));
}

ClawNet<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    const ModelConfig config = config_from_text(read_header_config(in, path));

    ClawNet<float> net(config);
    auto params = net.params();
    const std::uint64_t count = get_u64(in);
    if (count != params.size()) {
        throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
    }
    for (auto& p : params) {
        const std::uint64_t name_len = get_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!in || name != p.name) {
            throw std::runtime_error("checkpoint: expected parameter " + p.name + ", found " +
                                     name);
        }
        const std::uint64_t rank = get_u64(in);
        if (rank != p.logical_extents.size()) {
            throw std::runtime_error("checkpoint: rank mismatch for " + p.name);
        }
        for (index_t e : p.logical_extents) {
            if (get_u64(in) != static_cast<std::uint64_t>(e)) {
                throw std::runtime_error("checkpoint: extent mismatch for " + p.name);
            }
        }
        for (float& v : p.value->data) v = get_f32(in);
    }
    return net;
}

}  // namespace claw
