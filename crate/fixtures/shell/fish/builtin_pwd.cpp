int builtin_pwd(parser_t &parser, wchar_t **argv) {
    print_cwd();
    return 0;
}
