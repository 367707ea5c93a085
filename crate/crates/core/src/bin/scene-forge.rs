fn main() {
    std::process::exit(scene_forge::cli::main_with_args(std::env::args_os()));
}
