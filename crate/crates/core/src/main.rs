fn main() {
    std::process::exit(mxsim_core::cli::main_with_args(std::env::args_os()));
}
