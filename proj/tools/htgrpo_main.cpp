#include "htgrpo/harness.hpp"

int main(int argc, char** argv) { return htgrpo::cli_main(argc, argv); }
