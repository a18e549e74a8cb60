import rclpy
from rclpy.node import Node
from sensor_msgs.msg import Image

OUT_WIDTH, OUT_HEIGHT = 1280, 720


class ImageFilterLarge(Node):
    def __init__(self):
        super().__init__("image_filter_large")
        self.sub = self.create_subscription(Image, "image_raw", self.on_image, 10)
        self.pub = self.create_publisher(Image, "image_filtered", 10)

    def on_image(self, msg):
        out = Image(width=OUT_WIDTH, height=OUT_HEIGHT, encoding=msg.encoding)
        self.pub.publish(out)


def main():
    rclpy.init()
    rclpy.spin(ImageFilterLarge())
