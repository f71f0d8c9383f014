#include "chronoscope/cli.hpp"

int main(int argc, char** argv) {
    return chronoscope::cli::main(argc, argv);
}
