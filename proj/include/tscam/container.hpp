#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tscam/tensor.hpp"

namespace tscam {

// Binary tensor archive used for checkpoints, CAM dumps and attention
// exports. Layout: magic "TSCAMTEN", a 4-byte little-endian header length,
// a JSON header mapping names to {dtype, shape, offset, byte_length}, then
// the raw little-endian payload. Non-tensor header keys (e.g. "config")
// carry free-form JSON metadata.
class TensorContainer {
public:
    using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

    void put(const std::string& name, Tensor<float> t);
    void put(const std::string& name, Tensor<double> t);

    bool contains(const std::string& name) const;

    // Insertion order; determines payload layout.
    const std::vector<std::string>& names() const { return order_; }

    template <typename T>
    const Tensor<T>& get(const std::string& name) const;

    // Free-form header entries stored alongside the tensor table.
    nlohmann::json meta = nlohmann::json::object();

    void save(const std::filesystem::path& path) const;
    static TensorContainer load(const std::filesystem::path& path);

private:
    const AnyTensor& entry(const std::string& name) const;

    std::map<std::string, AnyTensor> entries_;
    std::vector<std::string> order_;
};

}  // namespace tscam
