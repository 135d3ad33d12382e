fn main() {
    std::process::exit(sparseprop_cli::main_with_args(std::env::args_os()));
}
