int net_send(int fd, const char *buf, int len) {
  return send(fd, buf, len, 0);
}

int net_recv(int fd, char *buf) { return recv(fd, buf, 0x1000, 0); }
