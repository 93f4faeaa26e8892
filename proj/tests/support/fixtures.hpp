#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <ismell/corpus.hpp>

namespace ismell::testing {

// Builds an alternating conversation (user first) from raw turn contents.
inline corpus::Conversation make_conversation(std::string id,
                                              std::vector<std::string> contents) {
    corpus::Conversation conv;
    conv.id = std::move(id);
    for (std::size_t i = 0; i < contents.size(); ++i) {
        auto role = (i % 2 == 0) ? corpus::Role::user : corpus::Role::assistant;
        conv.turns.push_back(
            corpus::Turn::make(static_cast<int>(i) + 1, role, std::move(contents[i])));
    }
    return conv;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

// Fresh per-test scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::path(TEST_SCRATCH_DIR) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path test_data(const std::string& name) {
    return std::filesystem::path(TEST_DATA_DIR) / name;
}

}  // namespace ismell::testing
