#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace svac {

// Minimal safetensors reader: little-endian u64 header length, JSON header
// mapping tensor name -> {dtype, shape, data_offsets}, then raw data.
// Only F32 tensors are accepted; that is what the target checkpoints store.
struct TensorView {
    std::vector<std::size_t> shape;
    const float* data = nullptr;
    std::size_t size = 0; // element count
};

class SafeTensors {
  public:
    // Reads the whole file into memory. Throws AssetError on malformed files.
    static SafeTensors load(const std::string& path);

    bool contains(const std::string& name) const;
    TensorView tensor(const std::string& name) const; // throws AssetError if absent
    std::vector<std::string> names() const;           // sorted
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

  private:
    struct Entry {
        std::vector<std::size_t> shape;
        std::size_t begin = 0;
        std::size_t end = 0;
    };
    std::vector<std::uint8_t> blob_;
    std::size_t data_base_ = 0;
    std::map<std::string, Entry> entries_;
    std::map<std::string, std::string> metadata_;
};

} // namespace svac
