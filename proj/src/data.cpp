#include "claw/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "claw/png_io.hpp"

namespace fs = std::filesystem;

namespace claw {

namespace {

double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * unit_uniform(rng);
}

index_t uniform_int(std::mt19937_64& rng, index_t lo, index_t hi) {
    return lo + static_cast<index_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

/// Box-Muller from the raw engine; avoids std::normal_distribution so the
/// byte stream is identical across standard libraries.
double gaussian(std::mt19937_64& rng) {
    double u1 = unit_uniform(rng);
    while (u1 <= 0.0) u1 = unit_uniform(rng);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over the pair
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

Vec2 bezier(const Vec2& p0, const Vec2& p1, const Vec2& p2, double t) {
    const double u = 1.0 - t;
    return {u * u * p0.x + 2.0 * u * t * p1.x + t * t * p2.x,
            u * u * p0.y + 2.0 * u * t * p1.y + t * t * p2.y};
}

void stamp_disc(BinaryMask& mask, const Vec2& center, double radius) {
    const index_t y0 = std::max<index_t>(0, static_cast<index_t>(std::floor(center.y - radius)));
    const index_t y1 =
        std::min<index_t>(mask.height - 1, static_cast<index_t>(std::ceil(center.y + radius)));
    const index_t x0 = std::max<index_t>(0, static_cast<index_t>(std::floor(center.x - radius)));
    const index_t x1 =
        std::min<index_t>(mask.width - 1, static_cast<index_t>(std::ceil(center.x + radius)));
    const double r2 = radius * radius;
    for (index_t y = y0; y <= y1; ++y) {
        for (index_t x = x0; x <= x1; ++x) {
            const double dy = static_cast<double>(y) - center.y;
            const double dx = static_cast<double>(x) - center.x;
            if (dx * dx + dy * dy <= r2) mask.set(y, x, true);
        }
    }
}

Sample generate_attempt(const SynthSpec& spec, index_t index, index_t attempt) {
    std::mt19937_64 rng(
        mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(index)),
                 static_cast<std::uint64_t>(attempt)));
    const index_t s = spec.size;
    const double sd = static_cast<double>(s);

    BinaryMask mask(s, s);
    std::vector<double> vessel_value;  // intensity per vessel
    std::vector<index_t> vessel_of_pixel(static_cast<std::size_t>(s * s), -1);

    const index_t k = uniform_int(rng, spec.vessel_count_min, spec.vessel_count_max);
    for (index_t v = 0; v < k; ++v) {
        Vec2 p0{uniform_in(rng, 0.0, sd - 1.0), uniform_in(rng, 0.0, sd - 1.0)};
        Vec2 p2{uniform_in(rng, 0.0, sd - 1.0), uniform_in(rng, 0.0, sd - 1.0)};
        Vec2 p1{uniform_in(rng, 0.0, sd - 1.0), uniform_in(rng, 0.0, sd - 1.0)};
        const Vec2 mid{0.5 * (p0.x + p2.x), 0.5 * (p0.y + p2.y)};
        p1.x = mid.x + (p1.x - mid.x) * spec.curvature_scale;
        p1.y = mid.y + (p1.y - mid.y) * spec.curvature_scale;

        const double w0 = uniform_in(rng, spec.width_min, spec.width_max);
        const double w1 = uniform_in(rng, spec.width_min, spec.width_max);
        const double value = uniform_in(rng, spec.vessel_intensity_min,
                                        spec.vessel_intensity_max);
        vessel_value.push_back(value);

        // Dense parameter sampling: step fine enough that consecutive stamps
        // overlap even at width 1.
        const double chord = std::hypot(p2.x - p0.x, p2.y - p0.y) +
                             std::hypot(p1.x - p0.x, p1.y - p0.y) +
                             std::hypot(p2.x - p1.x, p2.y - p1.y);
        const index_t steps = std::max<index_t>(8, static_cast<index_t>(chord * 4.0));
        for (index_t i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(steps);
            const Vec2 c = bezier(p0, p1, p2, t);
            if (c.x < -1.0 || c.x > sd || c.y < -1.0 || c.y > sd) continue;
            const double w = w0 + (w1 - w0) * t;
            stamp_disc(mask, c, 0.5 * w);
        }
        // Where vessels overlap, the earlier stroke keeps the pixel.
        for (index_t y = 0; y < s; ++y) {
            for (index_t x = 0; x < s; ++x) {
                if (mask.at(y, x) && vessel_of_pixel[static_cast<std::size_t>(y * s + x)] < 0) {
                    vessel_of_pixel[static_cast<std::size_t>(y * s + x)] = v;
                }
            }
        }
    }

    // Background: bilinear ramp between four corner intensities.
    double corners[4];
    for (double& c : corners) c = uniform_in(rng, spec.background_min, spec.background_max);

    Tensor4<float> image(1, 3, s, s);
    for (index_t y = 0; y < s; ++y) {
        const double fy = sd > 1.0 ? static_cast<double>(y) / (sd - 1.0) : 0.0;
        for (index_t x = 0; x < s; ++x) {
            const double fx = sd > 1.0 ? static_cast<double>(x) / (sd - 1.0) : 0.0;
            double base = (1.0 - fy) * ((1.0 - fx) * corners[0] + fx * corners[1]) +
                          fy * ((1.0 - fx) * corners[2] + fx * corners[3]);
            const index_t owner = vessel_of_pixel[static_cast<std::size_t>(y * s + x)];
            if (owner >= 0) base = vessel_value[static_cast<std::size_t>(owner)];
            for (index_t c = 0; c < 3; ++c) {
                double v = base;
                if (spec.noise_sigma > 0.0) v += spec.noise_sigma * gaussian(rng);
                image(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }

    Sample sample;
    sample.image = std::move(image);
    sample.mask = std::move(mask);
    sample.id = "synth_" + std::to_string(spec.seed) + "_" + std::to_string(index);
    return sample;
}

/// Regenerates with a derived sub-seed until the mask is non-empty with
/// foreground fraction below one half; still a pure function of (seed, index).
Sample generate_one(const SynthSpec& spec, index_t index) {
    for (index_t attempt = 0; attempt < 16; ++attempt) {
        Sample s = generate_attempt(spec, index, attempt);
        const index_t fg = s.mask.count();
        if (fg > 0 && 2 * fg < spec.size * spec.size) return s;
    }
    throw std::runtime_error("synth_generate: could not draw a mask with foreground fraction in (0, 0.5) for index " +
                             std::to_string(index));
}

std::string format_key_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void SynthSpec::validate() const {
    if (size < 32) throw std::invalid_argument("SynthSpec: size must be >= 32");
    if (vessel_count_min < 1 || vessel_count_max < vessel_count_min) {
        throw std::invalid_argument("SynthSpec: vessel count range is empty");
    }
    if (width_min < 1.0 || width_max < width_min) {
        throw std::invalid_argument("SynthSpec: width range must be non-empty with min >= 1");
    }
    if (noise_sigma < 0.0) throw std::invalid_argument("SynthSpec: noise sigma must be >= 0");
    if (vessel_intensity_max < vessel_intensity_min ||
        background_max < background_min) {
        throw std::invalid_argument("SynthSpec: intensity ranges are empty");
    }
}

Sample load_pair(const std::string& image_path, const std::string& mask_path) {
    const ImageU8 img = read_png(image_path);
    const ImageU8 msk = read_png(mask_path);
    if (msk.channels != 1) {
        throw std::runtime_error("load_pair: mask must be grayscale: " + mask_path);
    }
    if (img.height != msk.height || img.width != msk.width) {
        throw std::runtime_error("load_pair: image and mask extents differ for " + image_path);
    }

    Sample s;
    s.image = Tensor4<float>(1, img.channels, img.height, img.width);
    for (index_t c = 0; c < img.channels; ++c) {
        for (index_t y = 0; y < img.height; ++y) {
            for (index_t x = 0; x < img.width; ++x) {
                s.image(0, c, y, x) = static_cast<float>(img.at(y, x, c)) / 255.0f;
            }
        }
    }
    s.mask = BinaryMask(msk.height, msk.width);
    for (index_t y = 0; y < msk.height; ++y) {
        for (index_t x = 0; x < msk.width; ++x) {
            const std::uint8_t v = msk.at(y, x, 0);
            if (v != 0 && v != 255) {
                throw std::runtime_error("load_pair: mask value " + std::to_string(v) +
                                         " is not binary in " + mask_path);
            }
            s.mask.set(y, x, v == 255);
        }
    }
    s.id = fs::path(image_path).stem().string();
    return s;
}

void save_sample(const std::string& dir, const Sample& sample) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");

    const Tensor4<float>& img = sample.image;
    std::vector<std::uint8_t> pixels(
        static_cast<std::size_t>(img.height * img.width * img.channels));
    for (index_t y = 0; y < img.height; ++y) {
        for (index_t x = 0; x < img.width; ++x) {
            for (index_t c = 0; c < img.channels; ++c) {
                const float v = std::clamp(img(0, c, y, x), 0.0f, 1.0f);
                pixels[static_cast<std::size_t>((y * img.width + x) * img.channels + c)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    const std::string img_path = (fs::path(dir) / "images" / (sample.id + ".png")).string();
    if (img.channels == 1) {
        write_png_gray8(img_path, img.height, img.width, pixels.data());
    } else if (img.channels == 3) {
        write_png_rgb8(img_path, img.height, img.width, pixels.data());
    } else {
        throw std::runtime_error("save_sample: unsupported channel count");
    }

    std::vector<std::uint8_t> mask_bytes(sample.mask.values.size());
    for (std::size_t i = 0; i < mask_bytes.size(); ++i) {
        mask_bytes[i] = sample.mask.values[i] ? 255 : 0;
    }
    write_png_gray8((fs::path(dir) / "masks" / (sample.id + ".png")).string(),
                    sample.mask.height, sample.mask.width, mask_bytes.data());
}

Sample resize_to(const Sample& sample, index_t size) {
    if (size < 1) throw std::invalid_argument("resize_to: size must be >= 1");
    if (sample.image.height == size && sample.image.width == size) return sample;

    Sample out;
    out.id = sample.id;
    const Tensor4<float>& src = sample.image;
    out.image = Tensor4<float>(1, src.channels, size, size);

    // Bilinear with the same half-pixel convention as the network upsampler:
    // source position = (dst + 0.5) * in/out - 0.5, taps clamped to the frame.
    const double sy = static_cast<double>(src.height) / static_cast<double>(size);
    const double sx = static_cast<double>(src.width) / static_cast<double>(size);
    for (index_t c = 0; c < src.channels; ++c) {
        for (index_t y = 0; y < size; ++y) {
            const double fsy = (static_cast<double>(y) + 0.5) * sy - 0.5;
            const index_t y0 = std::clamp<index_t>(static_cast<index_t>(std::floor(fsy)), 0,
                                                   src.height - 1);
            const index_t y1 = std::min<index_t>(y0 + 1, src.height - 1);
            const double wy = std::clamp(fsy - std::floor(fsy), 0.0, 1.0);
            for (index_t x = 0; x < size; ++x) {
                const double fsx = (static_cast<double>(x) + 0.5) * sx - 0.5;
                const index_t x0 = std::clamp<index_t>(static_cast<index_t>(std::floor(fsx)),
                                                       0, src.width - 1);
                const index_t x1 = std::min<index_t>(x0 + 1, src.width - 1);
                const double wx = std::clamp(fsx - std::floor(fsx), 0.0, 1.0);
                const double v =
                    (1.0 - wy) * ((1.0 - wx) * src(0, c, y0, x0) + wx * src(0, c, y0, x1)) +
                    wy * ((1.0 - wx) * src(0, c, y1, x0) + wx * src(0, c, y1, x1));
                out.image(0, c, y, x) = static_cast<float>(v);
            }
        }
    }

    out.mask = BinaryMask(size, size);
    const double my = static_cast<double>(sample.mask.height) / static_cast<double>(size);
    const double mx = static_cast<double>(sample.mask.width) / static_cast<double>(size);
    for (index_t y = 0; y < size; ++y) {
        const index_t yn = std::clamp<index_t>(
            static_cast<index_t>(std::floor((static_cast<double>(y) + 0.5) * my)), 0,
            sample.mask.height - 1);
        for (index_t x = 0; x < size; ++x) {
            const index_t xn = std::clamp<index_t>(
                static_cast<index_t>(std::floor((static_cast<double>(x) + 0.5) * mx)), 0,
                sample.mask.width - 1);
            out.mask.set(y, x, sample.mask.at(yn, xn));
        }
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t count, index_t ratio_train, index_t ratio_test, std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("split: empty dataset");
    if (ratio_train < 1 || ratio_test < 1) {
        throw std::invalid_argument("split: ratio parts must be >= 1");
    }
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = count - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(order[i], order[j]);
    }
    const std::size_t n_test = count * static_cast<std::size_t>(ratio_test) /
                               static_cast<std::size_t>(ratio_train + ratio_test);
    const std::size_t n_train = count - n_test;
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {std::move(train), std::move(test)};
}

std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> dataset,
                                                          index_t ratio_train,
                                                          index_t ratio_test,
                                                          std::uint64_t seed) {
    auto [train_idx, test_idx] = split_indices(dataset.size(), ratio_train, ratio_test, seed);
    std::vector<Sample> train;
    std::vector<Sample> test;
    train.reserve(train_idx.size());
    test.reserve(test_idx.size());
    for (std::size_t i : train_idx) train.push_back(std::move(dataset[i]));
    for (std::size_t i : test_idx) test.push_back(std::move(dataset[i]));
    return {std::move(train), std::move(test)};
}

std::vector<Sample> synth_generate(const SynthSpec& spec, index_t count) {
    spec.validate();
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (index_t i = 0; i < count; ++i) {
        out.push_back(generate_one(spec, i));
    }
    return out;
}

void write_synth_dataset(const std::string& dir, const SynthSpec& spec, index_t count) {
    const std::vector<Sample> samples = synth_generate(spec, count);
    fs::create_directories(dir);
    for (const auto& s : samples) save_sample(dir, s);

    std::ofstream out(fs::path(dir) / "spec.txt");
    if (!out) throw std::runtime_error("write_synth_dataset: cannot write spec.txt");
    out << "size=" << spec.size << '\n'
        << "count=" << count << '\n'
        << "vessel_count_min=" << spec.vessel_count_min << '\n'
        << "vessel_count_max=" << spec.vessel_count_max << '\n'
        << "width_min=" << format_key_double(spec.width_min) << '\n'
        << "width_max=" << format_key_double(spec.width_max) << '\n'
        << "curvature_scale=" << format_key_double(spec.curvature_scale) << '\n'
        << "noise_sigma=" << format_key_double(spec.noise_sigma) << '\n'
        << "vessel_intensity_min=" << format_key_double(spec.vessel_intensity_min) << '\n'
        << "vessel_intensity_max=" << format_key_double(spec.vessel_intensity_max) << '\n'
        << "background_min=" << format_key_double(spec.background_min) << '\n'
        << "background_max=" << format_key_double(spec.background_max) << '\n'
        << "seed=" << spec.seed << '\n';
}

std::vector<Sample> load_dataset(const std::string& dir) {
    const fs::path images = fs::path(dir) / "images";
    const fs::path masks = fs::path(dir) / "masks";
    if (!fs::is_directory(images) || !fs::is_directory(masks)) {
        throw std::runtime_error("load_dataset: " + dir +
                                 " does not contain images/ and masks/ directories");
    }
    std::set<std::string> ids;
    for (const auto& entry : fs::directory_iterator(images)) {
        if (entry.path().extension() == ".png") ids.insert(entry.path().stem().string());
    }
    if (ids.empty()) {
        throw std::runtime_error("load_dataset: no PNG images under " + images.string());
    }
    std::vector<Sample> out;
    for (const std::string& id : ids) {
        const fs::path mask_path = masks / (id + ".png");
        if (!fs::exists(mask_path)) {
            throw std::runtime_error("load_dataset: missing mask for id " + id);
        }
        out.push_back(load_pair((images / (id + ".png")).string(), mask_path.string()));
    }
    return out;
}

Tensor4<float> adapt_channels(const Tensor4<float>& image, index_t channels) {
    if (image.channels == channels) return image;
    Tensor4<float> out(image.batch, channels, image.height, image.width);
    if (image.channels == 1) {
        for (index_t n = 0; n < image.batch; ++n) {
            for (index_t c = 0; c < channels; ++c) {
                std::copy(image.plane(n, 0), image.plane(n, 0) + image.plane_size(),
                          out.plane(n, c));
            }
        }
        return out;
    }
    if (channels == 1) {
        const float inv = 1.0f / static_cast<float>(image.channels);
        for (index_t n = 0; n < image.batch; ++n) {
            float* dst = out.plane(n, 0);
            std::fill(dst, dst + image.plane_size(), 0.0f);
            for (index_t c = 0; c < image.channels; ++c) {
                const float* src = image.plane(n, c);
                for (index_t p = 0; p < image.plane_size(); ++p) dst[p] += src[p] * inv;
            }
        }
        return out;
    }
    throw std::runtime_error("adapt_channels: cannot map " + std::to_string(image.channels) +
                             " channels to " + std::to_string(channels));
}

std::pair<Tensor4<float>, Tensor4<float>> make_batch(const std::vector<const Sample*>& samples,
                                                     index_t input_channels) {
    if (samples.empty()) throw std::invalid_argument("make_batch: empty batch");
    const index_t h = samples.front()->image.height;
    const index_t w = samples.front()->image.width;
    Tensor4<float> inputs(static_cast<index_t>(samples.size()), input_channels, h, w);
    Tensor4<float> targets(static_cast<index_t>(samples.size()), 1, h, w);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = *samples[i];
        if (s.image.height != h || s.image.width != w || s.mask.height != h ||
            s.mask.width != w) {
            throw std::invalid_argument("make_batch: sample extents differ within batch");
        }
        const Tensor4<float> img = adapt_channels(s.image, input_channels);
        std::copy(img.data.begin(), img.data.end(),
                  inputs.data.begin() + static_cast<std::ptrdiff_t>(i) * img.size());
        float* t = targets.item(static_cast<index_t>(i));
        for (std::size_t p = 0; p < s.mask.values.size(); ++p) {
            t[p] = s.mask.values[p] ? 1.0f : 0.0f;
        }
    }
    return {std::move(inputs), std::move(targets)};
}

}  // namespace claw
