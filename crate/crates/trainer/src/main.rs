fn main() {
    std::process::exit(smsnet_train::cli::main());
}
