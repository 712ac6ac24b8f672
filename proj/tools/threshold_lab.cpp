#include "threshold_lab/cli.hpp"

int main(int argc, char** argv) { return threshold_lab::cli::main_entry(argc, argv); }
