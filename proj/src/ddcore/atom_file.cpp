#include "halox/ddcore.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <string>
#include <unordered_set>

namespace halox::dd {

namespace {

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
            if (!cur.empty())
                out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

template <typename T>
bool parse_number(const std::string& s, T& value)
{
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    return ec == std::errc{} && ptr == end;
}

} // namespace

AtomSet parse_atom_file(std::istream& in)
{
    AtomSet atoms;
    std::unordered_set<std::int64_t> seen;
    std::string line;
    std::size_t lineNo = 0;
    bool firstRecord = true;
    while (std::getline(in, line)) {
        ++lineNo;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        const auto fields = split_fields(line);
        std::int64_t id = 0;
        Vec3 p{};
        bool ok = fields.size() == 4 && parse_number(fields[0], id);
        for (int d = 0; ok && d < 3; ++d)
            ok = parse_number(fields[d + 1], p[d]);
        if (!ok) {
            double probe = 0.0;
            if (firstRecord && !fields.empty() && !parse_number(fields[0], probe)) {
                firstRecord = false;
                continue;
            }
            throw AtomFileError("line " + std::to_string(lineNo) + ": expected 'id x y z'");
        }
        firstRecord = false;
        if (!seen.insert(id).second)
            throw AtomFileError("line " + std::to_string(lineNo) + ": duplicate atom id " + std::to_string(id));
        atoms.globalId.push_back(id);
        atoms.positions.push_back(p);
    }
    return atoms;
}

AtomSet load_atom_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw AtomFileError("cannot open atom file '" + path + "'");
    return parse_atom_file(in);
}

} // namespace halox::dd
