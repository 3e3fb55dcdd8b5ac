#include "mirc/cli.hpp"

int main(int argc, char** argv) { return mirc::cli::run(argc, argv); }
