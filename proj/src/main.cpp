#include "hybridtrain/harness.hpp"

int main(int argc, char** argv) { return hybridtrain::cli_main(argc, argv); }
