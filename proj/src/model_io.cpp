#include "shearlyap/model_io.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "shearlyap/errors.hpp"

namespace shearlyap {

void write_model(std::ostream& os, const AdaptedFamilyModel& m) {
    std::ostringstream out;
    out.precision(17);
    out << "adapted-model 1\n";
    out << "params " << m.beta << ' ' << m.delta << ' ' << m.lambda << '\n';
    for (std::size_t a = 0; a < m.atoms.size(); ++a) {
        const auto& atom = m.atoms[a];
        out << "atom " << a << ' ' << atom.weight << ' ' << atom.sector.start << ' ' << atom.sector.length << '\n';
    }
    for (std::size_t a = 0; a < m.atoms.size(); ++a)
        for (const auto& c : m.atoms[a].children)
            out << "child " << a << ' ' << c.target << ' ' << c.weight << ' ' << (c.good ? 1 : 0) << ' '
                << c.matrix(0, 0) << ' ' << c.matrix(0, 1) << ' ' << c.matrix(1, 0) << ' ' << c.matrix(1, 1) << '\n';
    out << "end\n";
    os << out.str();
}

AdaptedFamilyModel read_model(std::istream& is) {
    AdaptedFamilyModel m;
    std::string line;
    int line_no = 0;
    bool header = false, params = false, ended = false;
    auto fail = [&](const std::string& why) {
        throw ValidationError("model line " + std::to_string(line_no) + ": " + why);
    };
    while (!ended && std::getline(is, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (!header) {
            int version = 0;
            if (tag != "adapted-model" || !(ls >> version) || version != 1) fail("expected 'adapted-model 1'");
            header = true;
        } else if (tag == "params") {
            if (!(ls >> m.beta >> m.delta >> m.lambda)) fail("params needs beta delta lambda");
            params = true;
        } else if (tag == "atom") {
            std::size_t idx = 0;
            ModelAtom atom;
            if (!(ls >> idx >> atom.weight >> atom.sector.start >> atom.sector.length)) fail("malformed atom");
            if (idx != m.atoms.size()) fail("atoms must be listed in order");
            m.atoms.push_back(atom);
        } else if (tag == "child") {
            std::size_t from = 0;
            int good = 0;
            ModelChild c;
            if (!(ls >> from >> c.target >> c.weight >> good >> c.matrix(0, 0) >> c.matrix(0, 1) >> c.matrix(1, 0) >>
                  c.matrix(1, 1)))
                fail("malformed child");
            if (from >= m.atoms.size()) fail("child of an undeclared atom");
            if (good != 0 && good != 1) fail("good flag must be 0 or 1");
            c.good = good == 1;
            m.atoms[from].children.push_back(c);
        } else if (tag == "end") {
            ended = true;
        } else {
            fail("unknown record '" + tag + "'");
        }
        std::string extra;
        if (ls >> extra) fail("trailing text '" + extra + "'");
    }
    if (!header) throw ValidationError("empty model text");
    if (!params) throw ValidationError("model has no params record");
    if (!ended) throw ValidationError("model text ends without 'end'");
    for (const auto& a : m.atoms)
        for (const auto& c : a.children)
            if (c.target < 0 || c.target >= static_cast<int>(m.atoms.size()))
                throw ValidationError("child target out of range");
    return m;
}

std::string model_to_string(const AdaptedFamilyModel& m) {
    std::ostringstream os;
    write_model(os, m);
    return os.str();
}

AdaptedFamilyModel model_from_string(const std::string& text) {
    std::istringstream is(text);
    return read_model(is);
}

}  // namespace shearlyap
