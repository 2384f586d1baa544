#include "oplearn/harness.hpp"

int main(int argc, char** argv) { return oplearn::cli_main(argc, argv); }
