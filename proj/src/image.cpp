#include "srs/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "srs/errors.hpp"

namespace srs {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) throw IoError(path + ": truncated PGM header");
    return tok;
}

long parse_long(const std::string& tok, const std::string& path) {
    try {
        size_t pos = 0;
        long v = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw IoError(path + ": bad PGM header token '" + tok + "'");
    }
}

}  // namespace

Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");

    if (next_token(in, path) != "P5")
        throw IoError(path + ": not a binary PGM (expected magic P5)");
    long w = parse_long(next_token(in, path), path);
    long h = parse_long(next_token(in, path), path);
    long maxval = parse_long(next_token(in, path), path);
    if (w <= 0 || h <= 0)
        throw IoError(path + ": invalid PGM dimensions");
    if (maxval <= 0 || maxval > 255)
        throw IoError(path + ": unsupported PGM maxval " + std::to_string(maxval));

    std::vector<std::uint8_t> raw(static_cast<size_t>(w) * static_cast<size_t>(h));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw IoError(path + ": truncated PGM pixel data");

    Tensor img({1, static_cast<int>(h), static_cast<int>(w)});
    // Divide rather than multiply by a reciprocal: k/255.0 must come back
    // bit-identical so quantized round trips are exact.
    for (size_t i = 0; i < raw.size(); ++i)
        img[static_cast<int>(i)] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
    return img;
}

void write_pgm(const std::string& path, const Tensor& img) {
    long h = 0, w = 0;
    if (img.rank() == 3 && img.dim(0) == 1) {
        h = img.dim(1);
        w = img.dim(2);
    } else if (img.rank() == 2) {
        h = img.dim(0);
        w = img.dim(1);
    } else {
        throw DimensionError("write_pgm expects a (1,h,w) or (h,w) tensor");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> raw(static_cast<size_t>(h) * static_cast<size_t>(w));
    for (size_t i = 0; i < raw.size(); ++i) {
        double v = img[static_cast<int>(i)];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError(path + ": write failed");
}

}  // namespace srs
