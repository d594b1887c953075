#include "svac/safetensors.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "svac/errors.hpp"

namespace svac {

using nlohmann::json;

SafeTensors SafeTensors::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("cannot open checkpoint file: " + path);

    SafeTensors st;
    in.seekg(0, std::ios::end);
    const std::streamoff file_size = in.tellg();
    in.seekg(0);
    if (file_size < 8) throw AssetError("checkpoint file truncated: " + path);
    st.blob_.resize(static_cast<std::size_t>(file_size));
    in.read(reinterpret_cast<char*>(st.blob_.data()), file_size);
    if (!in) throw AssetError("failed reading checkpoint file: " + path);

    std::uint64_t header_len = 0;
    std::memcpy(&header_len, st.blob_.data(), 8);
    if (8 + header_len > st.blob_.size())
        throw AssetError("checkpoint header length exceeds file size: " + path);

    json header;
    try {
        header = json::parse(st.blob_.begin() + 8, st.blob_.begin() + 8 + header_len);
    } catch (const json::parse_error& e) {
        throw AssetError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    st.data_base_ = 8 + header_len;
    const std::size_t data_size = st.blob_.size() - st.data_base_;

    for (auto it = header.begin(); it != header.end(); ++it) {
        if (it.key() == "__metadata__") {
            for (auto m = it.value().begin(); m != it.value().end(); ++m)
                st.metadata_[m.key()] = m.value().get<std::string>();
            continue;
        }
        const json& t = it.value();
        const std::string dtype = t.at("dtype").get<std::string>();
        if (dtype != "F32")
            throw AssetError("tensor '" + it.key() + "' has dtype " + dtype +
                             "; only F32 checkpoints are supported");
        Entry e;
        std::size_t count = 1;
        for (const auto& d : t.at("shape")) {
            e.shape.push_back(d.get<std::size_t>());
            count *= e.shape.back();
        }
        const auto& off = t.at("data_offsets");
        e.begin = off.at(0).get<std::size_t>();
        e.end = off.at(1).get<std::size_t>();
        if (e.end < e.begin || e.end > data_size || e.end - e.begin != count * 4)
            throw AssetError("tensor '" + it.key() + "' has inconsistent data offsets");
        st.entries_[it.key()] = std::move(e);
    }
    return st;
}

bool SafeTensors::contains(const std::string& name) const {
    return entries_.count(name) != 0;
}

TensorView SafeTensors::tensor(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw AssetError("checkpoint is missing tensor '" + name + "'");
    TensorView v;
    v.shape = it->second.shape;
    v.data = reinterpret_cast<const float*>(blob_.data() + data_base_ + it->second.begin);
    v.size = (it->second.end - it->second.begin) / 4;
    return v;
}

std::vector<std::string> SafeTensors::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

} // namespace svac
