#include "capture.h"

int video_start(struct session *s) {
  if (!s->device) return -1;
  return send_command(s, "video_start", 0x400);
}
