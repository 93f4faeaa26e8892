#include "ismell/jsonio.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

namespace ismell::jsonio {

namespace fs = std::filesystem;

Result<std::string> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return Error{Error::Kind::io, "cannot open " + path.string()};
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        return Error{Error::Kind::io, "read failure on " + path.string()};
    }
    return buf.str();
}

std::optional<Error> atomic_write(const fs::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) return Error{Error::Kind::io, "cannot create " + path.parent_path().string()};
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) return Error{Error::Kind::io, "cannot open " + tmp.string()};
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) return Error{Error::Kind::io, "write failure on " + tmp.string()};
    }
    fs::rename(tmp, path, ec);
    if (ec) return Error{Error::Kind::io, "rename failure on " + path.string()};
    return std::nullopt;
}

std::vector<std::pair<std::size_t, std::string>> split_jsonl(const std::string& text) {
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        const bool blank = line.find_first_not_of(" \t") == std::string::npos;
        if (!blank) lines.emplace_back(line_no, std::move(line));
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return lines;
}

Result<Json> parse_json(std::string_view text, const std::string& what) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        return Error{Error::Kind::parse, "invalid JSON in " + what};
    }
    return j;
}

}  // namespace ismell::jsonio
