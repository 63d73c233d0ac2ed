// Writes the reported-range gallery as a vector file for the CLI tests.
#include <fstream>
#include <iostream>

#include "emfv/store.hpp"
#include "fixtures.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture <out.jsonl>\n";
    return 2;
  }
  const emfv::Gallery g = fixture::reported_gallery(1);
  std::ofstream out(argv[1]);
  for (const auto& [person, samples] : g.persons()) {
    for (const auto& s : samples) {
      out << emfv::vector_line(
                 {person.str(), {s.values().begin(), s.values().end()}})
          << "\n";
    }
  }
  return out ? 0 : 1;
}
