#include "issrnn/cli.hpp"

int main(int argc, char** argv) { return issrnn::cli_main(argc, argv); }
