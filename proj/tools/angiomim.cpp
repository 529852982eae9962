#include "angio/cli.hpp"

int main(int argc, char** argv) { return angio::dispatch(argc, argv); }
