int builtin_cd(parser_t &parser, wchar_t **argv) {
    wcstring dir = argv_dir(argv);
    return change_dir(dir);
}
