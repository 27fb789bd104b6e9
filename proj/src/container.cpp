#include "tscam/container.hpp"

#include <cstring>
#include <fstream>

#include "tscam/errors.hpp"

namespace tscam {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'C', 'A', 'M', 'T', 'E', 'N'};

template <typename T>
const char* dtype_name();
template <>
const char* dtype_name<float>() {
    return "f32";
}
template <>
const char* dtype_name<double>() {
    return "f64";
}

}  // namespace

void TensorContainer::put(const std::string& name, Tensor<float> t) {
    if (!entries_.count(name)) {
        order_.push_back(name);
    }
    entries_.insert_or_assign(name, AnyTensor(std::move(t)));
}

void TensorContainer::put(const std::string& name, Tensor<double> t) {
    if (!entries_.count(name)) {
        order_.push_back(name);
    }
    entries_.insert_or_assign(name, AnyTensor(std::move(t)));
}

bool TensorContainer::contains(const std::string& name) const { return entries_.count(name) > 0; }

const TensorContainer::AnyTensor& TensorContainer::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw FormatError("container has no tensor named '" + name + "'");
    }
    return it->second;
}

template <typename T>
const Tensor<T>& TensorContainer::get(const std::string& name) const {
    const AnyTensor& e = entry(name);
    if (!std::holds_alternative<Tensor<T>>(e)) {
        throw FormatError("tensor '" + name + "' is not stored as " + dtype_name<T>());
    }
    return std::get<Tensor<T>>(e);
}

template const Tensor<float>& TensorContainer::get<float>(const std::string&) const;
template const Tensor<double>& TensorContainer::get<double>(const std::string&) const;

void TensorContainer::save(const std::filesystem::path& path) const {
    nlohmann::json header = meta;
    std::uint64_t offset = 0;
    for (const auto& name : order_) {
        const AnyTensor& e = entries_.at(name);
        nlohmann::json rec;
        std::uint64_t bytes = 0;
        std::visit(
            [&](const auto& t) {
                using Scalar = typename std::decay_t<decltype(t)>::value_type;
                rec["dtype"] = dtype_name<Scalar>();
                rec["shape"] = t.shape();
                bytes = static_cast<std::uint64_t>(t.size()) * sizeof(Scalar);
            },
            e);
        rec["offset"] = offset;
        rec["byte_length"] = bytes;
        header[name] = rec;
        offset += bytes;
    }

    const std::string header_str = header.dump();
    if (header_str.size() > 0xffffffffULL) {
        throw FormatError("container header too large");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t hlen = static_cast<std::uint32_t>(header_str.size());
    const unsigned char lenb[4] = {
        static_cast<unsigned char>(hlen & 0xff), static_cast<unsigned char>((hlen >> 8) & 0xff),
        static_cast<unsigned char>((hlen >> 16) & 0xff),
        static_cast<unsigned char>((hlen >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(lenb), 4);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& name : order_) {
        std::visit(
            [&](const auto& t) {
                using Scalar = typename std::decay_t<decltype(t)>::value_type;
                out.write(reinterpret_cast<const char*>(t.data()),
                          static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
            },
            entries_.at(name));
    }
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + 4 ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("'" + path.string() + "' is not a tensor container (bad magic)");
    }
    const unsigned char* lb = reinterpret_cast<const unsigned char*>(bytes.data() + 8);
    const std::uint32_t hlen = static_cast<std::uint32_t>(lb[0]) |
                               (static_cast<std::uint32_t>(lb[1]) << 8) |
                               (static_cast<std::uint32_t>(lb[2]) << 16) |
                               (static_cast<std::uint32_t>(lb[3]) << 24);
    const std::size_t payload_start = 12 + hlen;
    if (bytes.size() < payload_start) {
        throw FormatError("'" + path.string() + "' is truncated (header)");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.data() + 12, bytes.data() + payload_start);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path.string() + "' has a malformed header: " + e.what());
    }

    TensorContainer c;
    const std::size_t payload_size = bytes.size() - payload_start;
    // Tensor entries carry a dtype; everything else is metadata.
    std::vector<std::pair<std::uint64_t, std::string>> by_offset;
    for (auto it = header.begin(); it != header.end(); ++it) {
        const nlohmann::json& v = it.value();
        if (v.is_object() && v.contains("dtype") && v.contains("shape") && v.contains("offset") &&
            v.contains("byte_length")) {
            by_offset.emplace_back(v["offset"].get<std::uint64_t>(), it.key());
        } else {
            c.meta[it.key()] = v;
        }
    }
    std::sort(by_offset.begin(), by_offset.end());
    for (const auto& [offset, name] : by_offset) {
        const nlohmann::json& rec = header[name];
        const std::string dtype = rec["dtype"].get<std::string>();
        const std::uint64_t byte_length = rec["byte_length"].get<std::uint64_t>();
        if (offset + byte_length > payload_size) {
            throw FormatError("'" + path.string() + "' is truncated (tensor '" + name + "')");
        }
        std::vector<index_t> shape = rec["shape"].get<std::vector<index_t>>();
        const char* src = bytes.data() + payload_start + offset;
        if (dtype == "f32") {
            std::vector<float> data(byte_length / sizeof(float));
            std::memcpy(data.data(), src, byte_length);
            c.put(name, Tensor<float>(std::move(shape), std::move(data)));
        } else if (dtype == "f64") {
            std::vector<double> data(byte_length / sizeof(double));
            std::memcpy(data.data(), src, byte_length);
            c.put(name, Tensor<double>(std::move(shape), std::move(data)));
        } else {
            throw FormatError("tensor '" + name + "' has unsupported dtype '" + dtype + "'");
        }
    }
    return c;
}

}  // namespace tscam
